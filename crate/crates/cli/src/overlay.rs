use fss_core::grid::LatticeDesign;
use fss_core::Region;
use serde::Serialize;

/// Plot-ready rectangles for every signalled day.
#[derive(Debug, Serialize)]
pub struct SignalOverlay {
    pub config_hash: String,
    pub rows: usize,
    pub cols: usize,
    pub days: Vec<OverlayDay>,
}

#[derive(Debug, Serialize)]
pub struct OverlayDay {
    pub day: i64,
    pub plan: &'static str,
    pub rectangles: Vec<OverlayRect>,
}

#[derive(Debug, Serialize)]
pub struct OverlayRect {
    pub r0: usize,
    pub r1: usize,
    pub c0: usize,
    pub c1: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metres: Option<MetreRect>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetreRect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl SignalOverlay {
    pub fn new(config_hash: String, rows: usize, cols: usize) -> Self {
        Self { config_hash, rows, cols, days: Vec::new() }
    }

    pub fn push(&mut self, day: i64, plan: &'static str, regions: &[Region], design: Option<&LatticeDesign>) {
        if regions.is_empty() {
            return;
        }
        let rectangles = regions
            .iter()
            .map(|r| OverlayRect {
                r0: r.row_start(),
                r1: r.row_end(),
                c0: r.col_start(),
                c1: r.col_end(),
                metres: design.map(|d| metre_rect(d, r)),
            })
            .collect();
        self.days.push(OverlayDay { day, plan, rectangles });
    }
}

/// Row 1 is the northern band, so its top edge is `y_breaks[0]`.
pub fn metre_rect(design: &LatticeDesign, r: &Region) -> MetreRect {
    MetreRect {
        x_min: design.x_breaks[r.col_start() - 1],
        x_max: design.x_breaks[r.col_end()],
        y_min: design.y_breaks[r.row_end()],
        y_max: design.y_breaks[r.row_start() - 1],
    }
}
