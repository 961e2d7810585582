//! Every quota-respecting ordering of the three-translation, one-rotation,
//! one-scaling plan, rooted at `scale`, with cumulative rewards.
//!
//! ```bash
//! cargo run --example reward_tree
//! ```

use shapeshift::action::ActionType::{Rotation, Scaling, Translation};
use shapeshift::analytics::{reward_tree, RandomPolicyModel};
use shapeshift::reward::RewardProfile;

fn main() -> shapeshift::Result<()> {
    let plan = RandomPolicyModel::mixed_five_plan();
    for profile in [RewardProfile::figure2(), RewardProfile::eq5_literal()] {
        let tree = reward_tree(&plan, &profile, 5, Some(Scaling))?;
        println!("== {} ({} nodes)", profile.name, tree.node_count());
        print!("{}", tree.render());
        let path = tree
            .values_along(&[Scaling, Translation, Rotation, Translation, Translation])
            .expect("path exists");
        let shown: Vec<String> = path.iter().map(|r| format!("{:.1}", r.to_f64())).collect();
        println!("scale > tr > rot > tr > tr: {}\n", shown.join(", "));
    }
    Ok(())
}
