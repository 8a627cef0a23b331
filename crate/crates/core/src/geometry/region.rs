use std::fmt;

/// Rectangular pixel region on an image grid.
///
/// `col`/`row` is the top-left index (may be negative for requests relative to
/// a grid that does not start at the image origin), `cols`/`rows` the extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ImageRegion {
    pub col: i64,
    pub row: i64,
    pub cols: usize,
    pub rows: usize,
}

impl ImageRegion {
    pub const fn new(col: i64, row: i64, cols: usize, rows: usize) -> Self {
        Self { col, row, cols, rows }
    }

    /// Region covering a whole `cols` x `rows` image.
    pub const fn full(cols: usize, rows: usize) -> Self {
        Self::new(0, 0, cols, rows)
    }

    pub fn is_empty(&self) -> bool {
        self.cols == 0 || self.rows == 0
    }

    pub fn pixel_count(&self) -> usize {
        self.cols * self.rows
    }

    pub fn col_end(&self) -> i64 {
        self.col + self.cols as i64
    }

    pub fn row_end(&self) -> i64 {
        self.row + self.rows as i64
    }

    /// Overlap of two regions; empty regions intersect nothing.
    pub fn intersection(&self, other: &ImageRegion) -> Option<ImageRegion> {
        if self.is_empty() || other.is_empty() {
            return None;
        }
        let col = self.col.max(other.col);
        let row = self.row.max(other.row);
        let col_end = self.col_end().min(other.col_end());
        let row_end = self.row_end().min(other.row_end());
        if col_end <= col || row_end <= row {
            return None;
        }
        Some(ImageRegion::new(
            col,
            row,
            (col_end - col) as usize,
            (row_end - row) as usize,
        ))
    }

    /// Smallest region containing both. An empty operand contributes nothing.
    pub fn union(&self, other: &ImageRegion) -> ImageRegion {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        let col = self.col.min(other.col);
        let row = self.row.min(other.row);
        let col_end = self.col_end().max(other.col_end());
        let row_end = self.row_end().max(other.row_end());
        ImageRegion::new(col, row, (col_end - col) as usize, (row_end - row) as usize)
    }

    /// True when `other` lies entirely inside `self`. Empty regions are
    /// contained everywhere.
    pub fn contains(&self, other: &ImageRegion) -> bool {
        other.is_empty()
            || (other.col >= self.col
                && other.row >= self.row
                && other.col_end() <= self.col_end()
                && other.row_end() <= self.row_end())
    }

    pub fn contains_pixel(&self, col: i64, row: i64) -> bool {
        col >= self.col && col < self.col_end() && row >= self.row && row < self.row_end()
    }

    /// Same extent, index shifted by `(dcol, drow)`.
    pub fn translated(&self, dcol: i64, drow: i64) -> ImageRegion {
        ImageRegion::new(self.col + dcol, self.row + drow, self.cols, self.rows)
    }
}

impl fmt::Display for ImageRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[col {}, row {}, {}x{}]", self.col, self.row, self.cols, self.rows)
    }
}
