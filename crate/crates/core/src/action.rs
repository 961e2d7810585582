//! The textual action vocabulary agents answer with, and the parser that
//! turns free-form agent output into one label.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::{Direction, Rotation, Scaling, Transform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionLabel {
    NoRotation,
    QuarterRotation,
    SlightRotation,
    NoTranslation,
    Up,
    Down,
    Left,
    Right,
    NoScaling,
    DoubleSize,
    HalfSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionType {
    Rotation,
    Translation,
    Scaling,
}

impl ActionType {
    pub const ALL: [ActionType; 3] = [ActionType::Rotation, ActionType::Translation, ActionType::Scaling];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionType::Rotation => "rotation",
            ActionType::Translation => "translation",
            ActionType::Scaling => "scale",
        }
    }

    /// Labels of this type that change the state.
    pub fn effective_labels(self) -> &'static [ActionLabel] {
        use ActionLabel::*;
        match self {
            ActionType::Rotation => &[QuarterRotation, SlightRotation],
            ActionType::Translation => &[Up, Down, Left, Right],
            ActionType::Scaling => &[DoubleSize, HalfSize],
        }
    }

    pub fn noop_label(self) -> ActionLabel {
        match self {
            ActionType::Rotation => ActionLabel::NoRotation,
            ActionType::Translation => ActionLabel::NoTranslation,
            ActionType::Scaling => ActionLabel::NoScaling,
        }
    }
}

impl FromStr for ActionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rotation" | "rot" | "r" => Ok(ActionType::Rotation),
            "translation" | "trans" | "t" => Ok(ActionType::Translation),
            "scale" | "scaling" | "s" => Ok(ActionType::Scaling),
            other => Err(format!("unknown action type `{other}`")),
        }
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl ActionLabel {
    pub const ALL: [ActionLabel; 11] = [
        ActionLabel::NoRotation,
        ActionLabel::QuarterRotation,
        ActionLabel::SlightRotation,
        ActionLabel::NoTranslation,
        ActionLabel::Up,
        ActionLabel::Down,
        ActionLabel::Left,
        ActionLabel::Right,
        ActionLabel::NoScaling,
        ActionLabel::DoubleSize,
        ActionLabel::HalfSize,
    ];

    /// Labels that change the state when applied.
    pub const EFFECTIVE: [ActionLabel; 8] = [
        ActionLabel::QuarterRotation,
        ActionLabel::SlightRotation,
        ActionLabel::Up,
        ActionLabel::Down,
        ActionLabel::Left,
        ActionLabel::Right,
        ActionLabel::DoubleSize,
        ActionLabel::HalfSize,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionLabel::NoRotation => "no_rotation",
            ActionLabel::QuarterRotation => "quarter_rotation",
            ActionLabel::SlightRotation => "slight_rotation",
            ActionLabel::NoTranslation => "no_translation",
            ActionLabel::Up => "up",
            ActionLabel::Down => "down",
            ActionLabel::Left => "left",
            ActionLabel::Right => "right",
            ActionLabel::NoScaling => "no_scaling",
            ActionLabel::DoubleSize => "double_size",
            ActionLabel::HalfSize => "half_size",
        }
    }

    pub fn action_type(self) -> ActionType {
        use ActionLabel::*;
        match self {
            NoRotation | QuarterRotation | SlightRotation => ActionType::Rotation,
            NoTranslation | Up | Down | Left | Right => ActionType::Translation,
            NoScaling | DoubleSize | HalfSize => ActionType::Scaling,
        }
    }

    pub fn is_noop(self) -> bool {
        matches!(
            self,
            ActionLabel::NoRotation | ActionLabel::NoTranslation | ActionLabel::NoScaling
        )
    }

    pub fn transform(self) -> Transform {
        use ActionLabel::*;
        match self {
            NoRotation | NoTranslation | NoScaling => Transform::Identity,
            QuarterRotation => Transform::Rotate(Rotation::Deg90),
            SlightRotation => Transform::Rotate(Rotation::Deg45),
            Up => Transform::Translate(Direction::Up),
            Down => Transform::Translate(Direction::Down),
            Left => Transform::Translate(Direction::Left),
            Right => Transform::Translate(Direction::Right),
            DoubleSize => Transform::Scale(Scaling::Double),
            HalfSize => Transform::Scale(Scaling::Half),
        }
    }

    pub fn from_direction(dir: Direction) -> ActionLabel {
        match dir {
            Direction::Up => ActionLabel::Up,
            Direction::Down => ActionLabel::Down,
            Direction::Left => ActionLabel::Left,
            Direction::Right => ActionLabel::Right,
        }
    }

    /// The label wrapped the way agents are asked to answer.
    pub fn as_answer(self) -> String {
        format!("<answer>{}</answer>", self.as_str())
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionLabel {
    type Err = AnswerError;

    /// Exact match against the vocabulary.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| AnswerError::UnknownLabel(s.to_string()))
    }
}

/// Why agent output could not be turned into an action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum AnswerError {
    #[error("no complete <answer></answer> pair")]
    NoAnswer,
    #[error("`{0}` is not an action label")]
    UnknownLabel(String),
}

const OPEN_TAG: &str = "<answer>";
const CLOSE_TAG: &str = "</answer>";

/// Extracts the label from the last complete `<answer>...</answer>` pair.
///
/// Content is trimmed and lowercased before matching; the match itself is exact.
pub fn parse_answer(text: &str) -> Result<ActionLabel, AnswerError> {
    let mut last: Option<&str> = None;
    let mut rest = text;
    while let Some(open) = rest.find(OPEN_TAG) {
        let after_open = &rest[open + OPEN_TAG.len()..];
        let Some(close) = after_open.find(CLOSE_TAG) else {
            break;
        };
        // A later opening tag before the close means the earlier one was abandoned.
        let inner = &after_open[..close];
        let inner = match inner.rfind(OPEN_TAG) {
            Some(i) => &inner[i + OPEN_TAG.len()..],
            None => inner,
        };
        last = Some(inner);
        rest = &after_open[close + CLOSE_TAG.len()..];
    }
    let content = last.ok_or(AnswerError::NoAnswer)?;
    content.trim().to_lowercase().parse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_tagged_answer() {
        assert_eq!(parse_answer("I think… <answer>up</answer>"), Ok(ActionLabel::Up));
    }

    #[test]
    fn last_complete_pair_wins() {
        assert_eq!(
            parse_answer("<answer>up</answer> on reflection <answer>left</answer>"),
            Ok(ActionLabel::Left)
        );
        assert_eq!(
            parse_answer("<answer>up</answer> then <answer>left"),
            Ok(ActionLabel::Up)
        );
        assert_eq!(
            parse_answer("<answer>draft <answer>right</answer>"),
            Ok(ActionLabel::Right)
        );
    }

    #[test]
    fn rejects_unknown_content_and_missing_tags() {
        assert_eq!(
            parse_answer("<answer>rotate please</answer>"),
            Err(AnswerError::UnknownLabel("rotate please".into()))
        );
        assert_eq!(parse_answer("up"), Err(AnswerError::NoAnswer));
        assert_eq!(parse_answer("<answer>up"), Err(AnswerError::NoAnswer));
        assert_eq!(parse_answer(""), Err(AnswerError::NoAnswer));
    }

    #[test]
    fn trims_and_lowercases() {
        assert_eq!(
            parse_answer("<answer>  Double_Size \n</answer>"),
            Ok(ActionLabel::DoubleSize)
        );
        assert!(parse_answer("<answer>'up'</answer>").is_err());
    }

    #[test]
    fn vocabulary_shape() {
        assert_eq!(ActionLabel::ALL.len(), 11);
        let effective: Vec<_> = ActionLabel::ALL.into_iter().filter(|l| !l.is_noop()).collect();
        assert_eq!(effective, ActionLabel::EFFECTIVE.to_vec());
        for t in ActionType::ALL {
            assert_eq!(t.noop_label().action_type(), t);
            assert!(t.effective_labels().iter().all(|l| l.action_type() == t));
        }
    }

    #[test]
    fn effective_labels_map_to_distinct_transforms() {
        let transforms: std::collections::HashSet<_> =
            ActionLabel::EFFECTIVE.iter().map(|l| l.transform()).collect();
        assert_eq!(transforms.len(), 8);
        assert!(!transforms.contains(&Transform::Identity));
    }

    #[test]
    fn label_serde_uses_vocabulary_spelling() {
        for l in ActionLabel::ALL {
            assert_eq!(serde_json::to_string(&l).unwrap(), format!("\"{}\"", l.as_str()));
            assert_eq!(l.as_str().parse::<ActionLabel>().unwrap(), l);
        }
    }

    proptest! {
        #[test]
        fn never_panics(text in ".{0,200}") {
            let _ = parse_answer(&text);
        }

        #[test]
        fn case_and_padding_insensitive(
            idx in 0usize..11,
            pad_l in "[ \t\n]{0,3}",
            pad_r in "[ \t\n]{0,3}",
            upper in any::<bool>(),
            prefix in "[a-z ]{0,20}",
        ) {
            let label = ActionLabel::ALL[idx];
            let body = if upper { label.as_str().to_uppercase() } else { label.as_str().to_string() };
            let text = format!("{prefix}<answer>{pad_l}{body}{pad_r}</answer>");
            prop_assert_eq!(parse_answer(&text), Ok(label));
        }
    }
}
