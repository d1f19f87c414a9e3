use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed axis-aligned rectangle in integer pixel coordinates.
///
/// Serialized as `[x, y, w, h]`. Width and height are always positive, so
/// every `Rect` has a strictly positive area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i64; 4]", into = "[i64; 4]")]
pub struct Rect {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl Rect {
    pub fn new(x: i64, y: i64, w: i64, h: i64) -> Result<Self> {
        if w <= 0 || h <= 0 {
            return Err(Error::InvalidArgument(format!(
                "rectangle [{x}, {y}, {w}, {h}] must have positive width and height"
            )));
        }
        Ok(Rect { x, y, w, h })
    }

    /// Rectangle spanning `[left, right) x [top, bottom)`.
    pub fn from_edges(left: i64, top: i64, right: i64, bottom: i64) -> Result<Self> {
        Rect::new(left, top, right - left, bottom - top)
    }

    pub fn right(&self) -> i64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> i64 {
        self.y + self.h
    }

    pub fn area(&self) -> i64 {
        self.w * self.h
    }

    /// Area shared with `other`; rectangles that only touch share zero area.
    pub fn intersection_area(&self, other: &Rect) -> i64 {
        let w = self.right().min(other.right()) - self.x.max(other.x);
        let h = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if w <= 0 || h <= 0 {
            0
        } else {
            w * h
        }
    }

    pub fn contains(&self, other: &Rect) -> bool {
        self.x <= other.x && self.y <= other.y && other.right() <= self.right() && other.bottom() <= self.bottom()
    }

    /// Smallest rectangle containing both.
    pub fn union(&self, other: &Rect) -> Rect {
        let left = self.x.min(other.x);
        let top = self.y.min(other.y);
        Rect {
            x: left,
            y: top,
            w: self.right().max(other.right()) - left,
            h: self.bottom().max(other.bottom()) - top,
        }
    }

    /// Smallest rectangle containing every rectangle in `rects`, or `None`
    /// when the iterator is empty.
    pub fn union_all<'a>(rects: impl IntoIterator<Item = &'a Rect>) -> Option<Rect> {
        rects
            .into_iter()
            .fold(None, |acc: Option<Rect>, r| Some(acc.map_or(*r, |a| a.union(r))))
    }
}

impl TryFrom<[i64; 4]> for Rect {
    type Error = Error;

    fn try_from([x, y, w, h]: [i64; 4]) -> Result<Self> {
        Rect::new(x, y, w, h)
    }
}

impl From<Rect> for [i64; 4] {
    fn from(r: Rect) -> Self {
        [r.x, r.y, r.w, r.h]
    }
}
