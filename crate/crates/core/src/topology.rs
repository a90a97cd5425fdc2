//! Network layout: macro sites, small cells and the two-stage splitter tree.
//!
//! Macro-cell coverage is a Voronoi partition of the service area. The
//! partition is realised implicitly: each small cell is attached to its
//! nearest macro site, which is all the optimizer needs. Every macro site
//! hosts a level-1 splitter and a candidate MEC node; level-1 splitters are
//! grouped under level-2 splitters, and the central office hangs off the
//! level-2 splitters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::slice::OltSite;
use crate::traffic::Split;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("area must be positive, got {width} x {height} km")]
    InvalidArea { width: f64, height: f64 },
    #[error("at least one macro site is required")]
    NoMacroSites,
    #[error("need at least as many small cells ({n_small}) as macro sites ({n_macro})")]
    TooFewSmallCells { n_macro: usize, n_small: usize },
    #[error("invalid layout parameter: {0}")]
    InvalidParameter(String),
    #[error("layout invariant violated: {0}")]
    Invariant(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Passive splitter, optionally with a lumped EDFA.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitterSpec {
    pub ports_in: u32,
    pub ports_out: u32,
    pub one_way_loss_db: f64,
    #[serde(default)]
    pub amplified: bool,
    #[serde(default)]
    pub edfa_gain_db: f64,
}

impl SplitterSpec {
    pub fn passive(ports_in: u32, ports_out: u32, one_way_loss_db: f64) -> Self {
        Self {
            ports_in,
            ports_out,
            one_way_loss_db,
            amplified: false,
            edfa_gain_db: 0.0,
        }
    }

    pub fn with_edfa(mut self, gain_db: f64) -> Self {
        self.amplified = gain_db > 0.0;
        self.edfa_gain_db = gain_db;
        self
    }

    /// Label in the usual `4x16` notation.
    pub fn label(&self) -> String {
        format!("{}x{}", self.ports_in, self.ports_out)
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if !(self.one_way_loss_db > 0.0) {
            return Err(TopologyError::Invariant(format!(
                "splitter {} loss must be positive",
                self.label()
            )));
        }
        if self.edfa_gain_db < 0.0 || (!self.amplified && self.edfa_gain_db != 0.0) {
            return Err(TopologyError::Invariant(format!(
                "splitter {} has inconsistent EDFA settings",
                self.label()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroSite {
    pub id: usize,
    pub position: Point,
    /// Number of DU instances the co-located MEC node can host.
    pub mec_capacity: usize,
    pub level1_splitter: SplitterSpec,
    pub level2_id: usize,
    pub fiber_to_level2_km: f64,
    /// Drop from the MEC's OLT to its own level-1 splitter.
    pub mec_drop_km: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallCell {
    pub id: usize,
    pub position: Point,
    pub parent_macro: usize,
    pub fiber_to_level1_km: f64,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level2Splitter {
    pub id: usize,
    pub position: Point,
    pub spec: SplitterSpec,
}

/// Where the central office sits relative to the level-2 splitters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoPlacement {
    /// Off-map, at a fixed fiber distance from every level-2 splitter.
    Fiber { km: f64 },
    /// On-map; fiber distance follows geometry and the routing factor.
    Point { position: Point },
}

impl Default for CoPlacement {
    fn default() -> Self {
        CoPlacement::Fiber { km: 20.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayout {
    pub seed: u64,
    pub area_width_km: f64,
    pub area_height_km: f64,
    pub macro_sites: Vec<MacroSite>,
    pub small_cells: Vec<SmallCell>,
    pub level2_splitters: Vec<Level2Splitter>,
    pub co: CoPlacement,
    pub fiber_routing_factor: f64,
    pub level2_fanout: usize,
}

/// Knobs for [`generate_layout`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutParams {
    pub n_macro: usize,
    pub n_small: usize,
    pub area_width_km: f64,
    pub area_height_km: f64,
    pub fiber_routing_factor: f64,
    pub level2_fanout: usize,
    pub mec_capacity: usize,
    pub mec_drop_km: f64,
    /// Floor applied to every generated fiber segment so distances stay positive.
    pub min_fiber_km: f64,
    /// Probability that a generated small cell uses split 7.1.
    pub split71_fraction: f64,
    pub level1_splitter: SplitterSpec,
    pub level2_splitter: SplitterSpec,
    pub co: CoPlacement,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            n_macro: 7,
            n_small: 60,
            area_width_km: 10.0,
            area_height_km: 10.0,
            fiber_routing_factor: 1.0,
            level2_fanout: 4,
            mec_capacity: 16,
            mec_drop_km: 0.5,
            min_fiber_km: 0.05,
            split71_fraction: 0.5,
            level1_splitter: SplitterSpec::passive(4, 16, 14.03),
            level2_splitter: SplitterSpec::passive(4, 4, 7.3),
            co: CoPlacement::default(),
        }
    }
}

impl LayoutParams {
    fn validate(&self) -> Result<(), TopologyError> {
        if !(self.area_width_km > 0.0 && self.area_height_km > 0.0) {
            return Err(TopologyError::InvalidArea {
                width: self.area_width_km,
                height: self.area_height_km,
            });
        }
        if self.n_macro == 0 {
            return Err(TopologyError::NoMacroSites);
        }
        if self.n_small < self.n_macro {
            return Err(TopologyError::TooFewSmallCells {
                n_macro: self.n_macro,
                n_small: self.n_small,
            });
        }
        if !(self.fiber_routing_factor >= 1.0) {
            return Err(TopologyError::InvalidParameter(
                "fiber_routing_factor must be >= 1".into(),
            ));
        }
        if self.level2_fanout == 0 || self.mec_capacity == 0 {
            return Err(TopologyError::InvalidParameter(
                "level2_fanout and mec_capacity must be >= 1".into(),
            ));
        }
        if !(self.mec_drop_km > 0.0 && self.min_fiber_km > 0.0) {
            return Err(TopologyError::InvalidParameter(
                "mec_drop_km and min_fiber_km must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.split71_fraction) {
            return Err(TopologyError::InvalidParameter(
                "split71_fraction must lie in [0, 1]".into(),
            ));
        }
        self.level1_splitter.validate()?;
        self.level2_splitter.validate()
    }
}

/// Index of the site nearest to `p`; ties go to the lowest index.
pub fn nearest_site(p: &Point, sites: &[Point]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, s) in sites.iter().enumerate() {
        let d = p.distance(s);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Builds a seeded random layout.
///
/// Macro sites are ordered by x coordinate before ids are handed out, so
/// consecutive ids are geographic neighbours and level-2 trees (chunks of
/// `level2_fanout` consecutive ids) stay compact.
pub fn generate_layout(seed: u64, params: &LayoutParams) -> Result<NetworkLayout, TopologyError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (params.area_width_km, params.area_height_km);
    let factor = params.fiber_routing_factor;
    let fiber = |d: f64| (d * factor).max(params.min_fiber_km);

    let mut macro_points: Vec<Point> = (0..params.n_macro)
        .map(|_| Point::new(rng.random_range(0.0..w), rng.random_range(0.0..h)))
        .collect();
    macro_points.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));

    let n_level2 = params.n_macro.div_ceil(params.level2_fanout);
    let level2_splitters: Vec<Level2Splitter> = (0..n_level2)
        .map(|l2| {
            let members = &macro_points
                [l2 * params.level2_fanout..((l2 + 1) * params.level2_fanout).min(params.n_macro)];
            let n = members.len() as f64;
            let cx = members.iter().map(|p| p.x).sum::<f64>() / n;
            let cy = members.iter().map(|p| p.y).sum::<f64>() / n;
            Level2Splitter {
                id: l2,
                position: Point::new(cx, cy),
                spec: params.level2_splitter.clone(),
            }
        })
        .collect();

    let macro_sites: Vec<MacroSite> = macro_points
        .iter()
        .enumerate()
        .map(|(id, p)| {
            let level2_id = id / params.level2_fanout;
            MacroSite {
                id,
                position: *p,
                mec_capacity: params.mec_capacity,
                level1_splitter: params.level1_splitter.clone(),
                level2_id,
                fiber_to_level2_km: fiber(p.distance(&level2_splitters[level2_id].position)),
                mec_drop_km: params.mec_drop_km,
            }
        })
        .collect();

    let small_cells = (0..params.n_small)
        .map(|id| {
            let position = Point::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
            let parent = nearest_site(&position, &macro_points);
            let split = if rng.random_bool(params.split71_fraction) {
                Split::Split71
            } else {
                Split::Split72
            };
            SmallCell {
                id,
                position,
                parent_macro: parent,
                fiber_to_level1_km: fiber(position.distance(&macro_points[parent])),
                split,
            }
        })
        .collect();

    let layout = NetworkLayout {
        seed,
        area_width_km: w,
        area_height_km: h,
        macro_sites,
        small_cells,
        level2_splitters,
        co: params.co.clone(),
        fiber_routing_factor: factor,
        level2_fanout: params.level2_fanout,
    };
    layout.validate()?;
    Ok(layout)
}

impl NetworkLayout {
    pub fn macro_site(&self, id: usize) -> Option<&MacroSite> {
        self.macro_sites.get(id).filter(|m| m.id == id)
    }

    pub fn small_cell(&self, id: usize) -> Option<&SmallCell> {
        self.small_cells.get(id).filter(|c| c.id == id)
    }

    /// Checks the structural invariants of a (possibly imported) layout.
    pub fn validate(&self) -> Result<(), TopologyError> {
        let bad = |msg: String| Err(TopologyError::Invariant(msg));
        if !(self.area_width_km > 0.0 && self.area_height_km > 0.0) {
            return Err(TopologyError::InvalidArea {
                width: self.area_width_km,
                height: self.area_height_km,
            });
        }
        if self.macro_sites.is_empty() {
            return Err(TopologyError::NoMacroSites);
        }
        let inside = |p: &Point| {
            (0.0..=self.area_width_km).contains(&p.x) && (0.0..=self.area_height_km).contains(&p.y)
        };
        for (i, m) in self.macro_sites.iter().enumerate() {
            if m.id != i {
                return bad(format!("macro site at index {i} has id {}", m.id));
            }
            if m.mec_capacity == 0 {
                return bad(format!("macro site {i} has zero MEC capacity"));
            }
            if !(m.fiber_to_level2_km > 0.0 && m.mec_drop_km > 0.0) {
                return bad(format!("macro site {i} has a non-positive fiber segment"));
            }
            if !inside(&m.position) {
                return bad(format!("macro site {i} lies outside the area"));
            }
            if !self.level2_splitters.iter().any(|l| l.id == m.level2_id) {
                return bad(format!("macro site {i} references missing level-2 splitter"));
            }
            m.level1_splitter.validate()?;
        }
        for (i, c) in self.small_cells.iter().enumerate() {
            if c.id != i {
                return bad(format!("small cell at index {i} has id {}", c.id));
            }
            if c.parent_macro >= self.macro_sites.len() {
                return bad(format!("small cell {i} references missing macro site"));
            }
            if !(c.fiber_to_level1_km > 0.0) {
                return bad(format!("small cell {i} has a non-positive drop"));
            }
            if !inside(&c.position) {
                return bad(format!("small cell {i} lies outside the area"));
            }
        }
        match &self.co {
            CoPlacement::Fiber { km } if !(*km > 0.0) => bad("CO fiber distance must be positive".into()),
            _ => Ok(()),
        }
    }

    fn level2(&self, id: usize) -> &Level2Splitter {
        self.level2_splitters
            .iter()
            .find(|l| l.id == id)
            .expect("layout validated: level-2 splitter exists")
    }

    /// Fiber from a level-2 splitter to the central office.
    pub fn co_fiber_km(&self, level2_id: usize) -> f64 {
        match &self.co {
            CoPlacement::Fiber { km } => *km,
            CoPlacement::Point { position } => {
                self.level2(level2_id).position.distance(position) * self.fiber_routing_factor
            }
        }
    }

    /// One-way optical path length of the reflective EAST-WEST route from an
    /// RU to a MEC.
    ///
    /// Within one level-1 tree the signal reflects at the level-1 splitter.
    /// Across level-1 trees it climbs to the shared level-2 splitter and
    /// reflects there. RUs and MECs under different level-2 splitters have no
    /// reflective path and yield `None`.
    pub fn east_west_distance_km(&self, ru: &SmallCell, mec: &MacroSite) -> Option<f64> {
        if ru.parent_macro == mec.id {
            return Some(ru.fiber_to_level1_km + mec.mec_drop_km);
        }
        let home = &self.macro_sites[ru.parent_macro];
        if home.level2_id != mec.level2_id {
            return None;
        }
        Some(ru.fiber_to_level1_km + home.fiber_to_level2_km + mec.fiber_to_level2_km + mec.mec_drop_km)
    }

    /// Classic NORTH-SOUTH route from an RU to the central office.
    pub fn north_south_distance_km(&self, ru: &SmallCell) -> f64 {
        let home = &self.macro_sites[ru.parent_macro];
        ru.fiber_to_level1_km + home.fiber_to_level2_km + self.co_fiber_km(home.level2_id)
    }

    pub fn distance_to_site_km(&self, ru: &SmallCell, site: OltSite) -> Option<f64> {
        match site {
            OltSite::Mec(id) => self.east_west_distance_km(ru, &self.macro_sites[id]),
            OltSite::Co => Some(self.north_south_distance_km(ru)),
        }
    }

    /// Ids of the small cells attached to each macro site.
    pub fn cells_by_macro(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.macro_sites.len()];
        for c in &self.small_cells {
            out[c.parent_macro].push(c.id);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n_macro: usize, n_small: usize) -> LayoutParams {
        LayoutParams {
            n_macro,
            n_small,
            ..LayoutParams::default()
        }
    }

    /// Two macros under one level-2 splitter, one RU at each, Table-1 distances.
    fn two_tree_layout() -> NetworkLayout {
        let l1 = SplitterSpec::passive(4, 8, 10.75);
        let mk_macro = |id: usize, x: f64| MacroSite {
            id,
            position: Point::new(x, 1.0),
            mec_capacity: 4,
            level1_splitter: l1.clone(),
            level2_id: 0,
            fiber_to_level2_km: 10.0,
            mec_drop_km: 0.5,
        };
        NetworkLayout {
            seed: 0,
            area_width_km: 4.0,
            area_height_km: 2.0,
            macro_sites: vec![mk_macro(0, 1.0), mk_macro(1, 3.0)],
            small_cells: vec![SmallCell {
                id: 0,
                position: Point::new(1.2, 1.0),
                parent_macro: 0,
                fiber_to_level1_km: 0.5,
                split: Split::Split72,
            }],
            level2_splitters: vec![Level2Splitter {
                id: 0,
                position: Point::new(2.0, 1.0),
                spec: SplitterSpec::passive(4, 4, 7.3),
            }],
            co: CoPlacement::default(),
            fiber_routing_factor: 1.0,
            level2_fanout: 4,
        }
    }

    #[test]
    fn single_region_takes_everything() {
        let layout = generate_layout(1, &params(1, 1)).unwrap();
        assert_eq!(layout.small_cells.len(), 1);
        assert_eq!(layout.small_cells[0].parent_macro, 0);
    }

    #[test]
    fn assignment_matches_exhaustive_nearest_scan() {
        let layout = generate_layout(7, &params(7, 60)).unwrap();
        for c in &layout.small_cells {
            let own = c.position.distance(&layout.macro_sites[c.parent_macro].position);
            for m in &layout.macro_sites {
                assert!(own <= c.position.distance(&m.position), "cell {} not nearest", c.id);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_layout(42, &params(5, 30)).unwrap();
        let b = generate_layout(42, &params(5, 30)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = generate_layout(43, &params(5, 30)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut p = params(3, 10);
        p.area_width_km = 0.0;
        assert!(matches!(generate_layout(1, &p), Err(TopologyError::InvalidArea { .. })));
        assert_eq!(generate_layout(1, &params(0, 10)), Err(TopologyError::NoMacroSites));
        assert!(matches!(
            generate_layout(1, &params(4, 3)),
            Err(TopologyError::TooFewSmallCells { .. })
        ));
    }

    #[test]
    fn same_tree_distance_uses_both_drops() {
        let layout = two_tree_layout();
        let ru = &layout.small_cells[0];
        let d = layout.east_west_distance_km(ru, &layout.macro_sites[0]).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_tree_distance_reflects_at_level2() {
        let layout = two_tree_layout();
        let ru = &layout.small_cells[0];
        let d = layout.east_west_distance_km(ru, &layout.macro_sites[1]).unwrap();
        assert!((d - 21.0).abs() < 1e-12);
    }

    #[test]
    fn different_level2_trees_are_unreachable() {
        let mut layout = two_tree_layout();
        layout.level2_splitters.push(Level2Splitter {
            id: 1,
            position: Point::new(3.0, 1.0),
            spec: SplitterSpec::passive(4, 4, 7.3),
        });
        layout.macro_sites[1].level2_id = 1;
        let ru = &layout.small_cells[0];
        assert_eq!(layout.east_west_distance_km(ru, &layout.macro_sites[1]), None);
        assert!(layout.east_west_distance_km(ru, &layout.macro_sites[0]).is_some());
    }

    #[test]
    fn degenerate_zero_segments_give_zero() {
        let mut layout = two_tree_layout();
        layout.small_cells[0].fiber_to_level1_km = 0.0;
        layout.macro_sites[0].mec_drop_km = 0.0;
        let ru = &layout.small_cells[0];
        assert_eq!(layout.east_west_distance_km(ru, &layout.macro_sites[0]), Some(0.0));
    }

    #[test]
    fn north_south_includes_co_fiber() {
        let layout = two_tree_layout();
        let d = layout.north_south_distance_km(&layout.small_cells[0]);
        assert!((d - 30.5).abs() < 1e-12);
    }

    #[test]
    fn generated_layouts_validate_and_stay_in_area() {
        for seed in 0..20 {
            let layout = generate_layout(seed, &params(6, 40)).unwrap();
            layout.validate().unwrap();
            assert!(layout.macro_sites.iter().all(|m| m.fiber_to_level2_km > 0.0));
        }
    }
}
