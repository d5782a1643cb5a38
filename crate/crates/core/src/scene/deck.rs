use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SceneError;
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Next,
    Previous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Text,
    Sprite,
}

/// One piece of slide content placed in classroom coordinates.
///
/// Items with `z < 0` recess behind the board, `z > 0` pop out toward the audience.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideItem {
    pub kind: ItemKind,
    pub position: Vec3,
    /// Width and height in meters at `position`.
    pub size: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sprite: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Slide {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub items: Vec<SlideItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideDeck {
    #[serde(default)]
    pub title: String,
    pub slides: Vec<Slide>,
    #[serde(default)]
    pub current_index: usize,
}

impl Default for SlideDeck {
    fn default() -> Self {
        Self { title: String::new(), slides: vec![Slide::default()], current_index: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Navigation {
    pub index: usize,
    /// The move was clamped at the first or last slide.
    pub boundary_hit: bool,
}

impl SlideDeck {
    pub fn from_json(text: &str) -> Result<SlideDeck, SceneError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let deck: SlideDeck = serde_path_to_error::deserialize(de)
            .map_err(|e| SceneError::InvalidDeck(format!("{}: {}", e.path(), e.inner())))?;
        deck.validate()?;
        Ok(deck)
    }

    pub fn load(path: &Path) -> Result<SlideDeck, SceneError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SceneError::InvalidDeck(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.slides.is_empty() {
            return Err(SceneError::InvalidDeck("slides: deck has no slides".into()));
        }
        if self.current_index >= self.slides.len() {
            return Err(SceneError::InvalidDeck("current_index: out of range".into()));
        }
        for (si, slide) in self.slides.iter().enumerate() {
            for (ii, item) in slide.items.iter().enumerate() {
                let path = format!("slides[{si}].items[{ii}]");
                if !item.position.is_finite() {
                    return Err(SceneError::InvalidDeck(format!("{path}.position: not finite")));
                }
                if !(item.size[0] > 0.0 && item.size[1] > 0.0) || !item.size.iter().all(|s| s.is_finite()) {
                    return Err(SceneError::InvalidDeck(format!("{path}.size: must be positive")));
                }
                match item.kind {
                    ItemKind::Text if item.text.is_none() => {
                        return Err(SceneError::InvalidDeck(format!("{path}.text: required for text items")))
                    }
                    ItemKind::Sprite if item.sprite.is_none() => {
                        return Err(SceneError::InvalidDeck(format!("{path}.sprite: required for sprite items")))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn current(&self) -> &Slide {
        &self.slides[self.current_index]
    }

    pub fn len(&self) -> usize {
        self.slides.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slides.is_empty()
    }

    pub fn navigate(&mut self, direction: Direction) -> Navigation {
        let last = self.slides.len().saturating_sub(1);
        let (index, boundary_hit) = match direction {
            Direction::Next if self.current_index >= last => (last, true),
            Direction::Next => (self.current_index + 1, false),
            Direction::Previous if self.current_index == 0 => (0, true),
            Direction::Previous => (self.current_index - 1, false),
        };
        self.current_index = index;
        Navigation { index, boundary_hit }
    }
}
