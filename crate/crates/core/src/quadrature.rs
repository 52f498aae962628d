//! Adaptive cubature over axis-aligned rectangles.
//!
//! Each panel is integrated with a tensor-product 15-point Gauss-Kronrod rule;
//! the embedded 7-point Gauss tensor rule gives the local error estimate.
//! Panels are bisected in both directions, worst first, until the summed
//! error estimate meets the requested relative tolerance.

#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// The 15 Kronrod abscissae on [-1, 1] with their Kronrod and Gauss weights
/// (Gauss weight is zero at Kronrod-only nodes).
fn rule() -> [(f64, f64, f64); 15] {
    let mut out = [(0.0, 0.0, 0.0); 15];
    for i in 0..7 {
        let wg = if i % 2 == 1 { WG[i / 2] } else { 0.0 };
        out[i] = (-XGK[i], WGK[i], wg);
        out[14 - i] = (XGK[i], WGK[i], wg);
    }
    out[7] = (0.0, WGK[7], WG[3]);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Self {
            x0: x.0,
            x1: x.1,
            y0: y.0,
            y1: y.1,
        }
    }

    fn split(&self) -> [Rect; 4] {
        let xm = 0.5 * (self.x0 + self.x1);
        let ym = 0.5 * (self.y0 + self.y1);
        [
            Rect::new((self.x0, xm), (self.y0, ym)),
            Rect::new((xm, self.x1), (self.y0, ym)),
            Rect::new((self.x0, xm), (ym, self.y1)),
            Rect::new((xm, self.x1), (ym, self.y1)),
        ]
    }

    fn splittable(&self) -> bool {
        let tiny = |a: f64, b: f64| (b - a) <= 64.0 * f64::EPSILON * a.abs().max(b.abs());
        !(tiny(self.x0, self.x1) || tiny(self.y0, self.y1))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CubatureOptions {
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for CubatureOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_panels: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cubature {
    pub value: f64,
    pub error_estimate: f64,
    pub panels: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    rect: Rect,
    value: f64,
    error: f64,
    abs_value: f64,
}

struct Queued {
    priority: f64,
    index: usize,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.index.cmp(&self.index))
    }
}

fn integrate_panel<F: Fn(f64, f64) -> f64>(
    f: &F,
    rect: Rect,
    nodes: &[(f64, f64, f64); 15],
) -> Panel {
    let (cx, hx) = (0.5 * (rect.x0 + rect.x1), 0.5 * (rect.x1 - rect.x0));
    let (cy, hy) = (0.5 * (rect.y0 + rect.y1), 0.5 * (rect.y1 - rect.y0));
    let (mut kronrod, mut gauss, mut abs_value) = (0.0, 0.0, 0.0);
    for &(u, wku, wgu) in nodes {
        let x = cx + hx * u;
        let (mut row_k, mut row_g, mut row_abs) = (0.0, 0.0, 0.0);
        for &(v, wkv, wgv) in nodes {
            let fx = f(x, cy + hy * v);
            row_k += wkv * fx;
            row_g += wgv * fx;
            row_abs += wkv * fx.abs();
        }
        kronrod += wku * row_k;
        gauss += wgu * row_g;
        abs_value += wku * row_abs;
    }
    let area = hx * hy;
    Panel {
        rect,
        value: kronrod * area,
        error: ((kronrod - gauss) * area).abs(),
        abs_value: abs_value * area,
    }
}

/// Integrate `f(x, y)` over `domain`. `weight` scales a panel's error when
/// choosing which panel to refine next; it never changes the stopping rule.
pub fn integrate_rect<F, W>(
    f: F,
    domain: Rect,
    options: CubatureOptions,
    weight: W,
) -> Result<Cubature>
where
    F: Fn(f64, f64) -> f64,
    W: Fn(&Rect) -> f64,
{
    let nodes = rule();
    let mut panels = vec![integrate_panel(&f, domain, &nodes)];
    let mut heap = BinaryHeap::new();
    heap.push(Queued {
        priority: panels[0].error * weight(&domain),
        index: 0,
    });
    // indices of leaves; parents are tombstoned by zeroing their contribution
    let mut live = vec![true];
    let mut leaves = 1usize;

    let totals = |panels: &[Panel], live: &[bool]| {
        let mut value = Neumaier::default();
        let (mut error, mut abs_value) = (0.0, 0.0);
        for (p, _) in panels.iter().zip(live).filter(|(_, &l)| l) {
            value.add(p.value);
            error += p.error;
            abs_value += p.abs_value;
        }
        (value.sum(), error, abs_value)
    };

    let (mut value, mut error, mut abs_value) = totals(&panels, &live);
    let mut since_resum = 0usize;
    loop {
        let target = (options.rel_tol * value.abs()).max(64.0 * f64::EPSILON * abs_value);
        if error <= target {
            break;
        }
        let Some(Queued { index, .. }) = heap.pop() else {
            return Err(Error::QuadratureNoConvergence {
                estimate: value,
                error,
                panels: leaves,
            });
        };
        let parent = panels[index];
        if !parent.rect.splittable() {
            continue;
        }
        if leaves + 3 > options.max_panels {
            return Err(Error::QuadratureNoConvergence {
                estimate: value,
                error,
                panels: leaves,
            });
        }
        live[index] = false;
        value -= parent.value;
        error -= parent.error;
        abs_value -= parent.abs_value;
        for rect in parent.rect.split() {
            let child = integrate_panel(&f, rect, &nodes);
            value += child.value;
            error += child.error;
            abs_value += child.abs_value;
            heap.push(Queued {
                priority: child.error * weight(&rect),
                index: panels.len(),
            });
            panels.push(child);
            live.push(true);
        }
        leaves += 3;
        since_resum += 1;
        if since_resum == 256 {
            (value, error, abs_value) = totals(&panels, &live);
            since_resum = 0;
        }
    }
    let (value, error, _) = totals(&panels, &live);
    Ok(Cubature {
        value,
        error_estimate: error,
        panels: leaves,
    })
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    compensation: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn sum(&self) -> f64 {
        self.sum + self.compensation
    }
}
