//! Fixed toy vocabulary for the binary QA protocol.
//!
//! Layout: eight reserved symbols, then one token per action class, then one
//! per scene class. Prompts are three tokens — question kind, queried class,
//! answer cue — and answers are two: yes/no followed by the end symbol.

use crate::error::{Error, Result};

/// Token-id layout for a given class count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocab {
    pub actions: usize,
    pub scenes: usize,
}

impl Vocab {
    pub const PAD: u32 = 0;
    pub const YES: u32 = 1;
    pub const NO: u32 = 2;
    /// Cue token after which the answer is produced.
    pub const ANS: u32 = 3;
    pub const END: u32 = 4;
    pub const Q_ACTION: u32 = 5;
    pub const Q_SCENE: u32 = 6;
    /// The "no action at all" class token.
    pub const NONE_ACTION: u32 = 7;
    const RESERVED: usize = 8;

    pub const PROMPT_LEN: usize = 3;
    pub const ANSWER_LEN: usize = 2;

    pub fn new(actions: usize, scenes: usize) -> Result<Self> {
        if actions < 2 || scenes < 2 {
            return Err(Error::Validation(format!(
                "need at least two action and scene classes, got {actions}/{scenes}"
            )));
        }
        Ok(Vocab { actions, scenes })
    }

    pub fn size(&self) -> usize {
        Self::RESERVED + self.actions + self.scenes
    }

    pub fn action_token(&self, a: usize) -> u32 {
        debug_assert!(a < self.actions);
        (Self::RESERVED + a) as u32
    }

    pub fn scene_token(&self, s: usize) -> u32 {
        debug_assert!(s < self.scenes);
        (Self::RESERVED + self.actions + s) as u32
    }

    /// "Is action `a` present?"; `None` asks about the absence class.
    pub fn action_prompt(&self, a: Option<usize>) -> Vec<u32> {
        let class = match a {
            Some(a) => self.action_token(a),
            None => Self::NONE_ACTION,
        };
        vec![Self::Q_ACTION, class, Self::ANS]
    }

    /// "Is the scene `s`?"
    pub fn scene_prompt(&self, s: usize) -> Vec<u32> {
        vec![Self::Q_SCENE, self.scene_token(s), Self::ANS]
    }

    pub fn answer(yes: bool) -> Vec<u32> {
        vec![if yes { Self::YES } else { Self::NO }, Self::END]
    }

    /// Interpret a decoded first token as yes/no; anything else is invalid.
    pub fn parse_answer(token: u32) -> Option<bool> {
        match token {
            Self::YES => Some(true),
            Self::NO => Some(false),
            _ => None,
        }
    }
}
