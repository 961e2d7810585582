//! Expected cumulative reward of the uniform random policy, computed in
//! closed form and checked by simulation.
//!
//! ```bash
//! cargo run --release --example random_baseline -- 200000
//! ```

use shapeshift::analytics::{baseline_table, render_baseline, AnalyticForm, RandomPolicyModel};
use shapeshift::reward::RewardProfile;

fn main() -> shapeshift::Result<()> {
    let trials = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200_000);
    let plan = RandomPolicyModel::mixed_five_plan();

    for (space, form) in [(8, AnalyticForm::Corrected), (11, AnalyticForm::Corrected), (8, AnalyticForm::Literal)] {
        let model = RandomPolicyModel::new(plan.clone(), RewardProfile::figure2(), space, 5)?;
        let mc = if form == AnalyticForm::Corrected { trials } else { 0 };
        let rows = baseline_table(&model, form, mc, 1)?;
        println!("{}", render_baseline(&rows, &format!("|A| = {space}, {form:?} form")));
    }
    Ok(())
}
