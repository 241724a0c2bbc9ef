//! Pseudo-coordinates `u(i, j)` in `[0, 1]^d` computed from node positions
//! or from node degrees.
//!
//! Scaling constants are fitted per graph, so coarsened graphs stay in range
//! after their positions change. For an edge `(i, j)` with offset
//! `delta = pos(j) - pos(i)`:
//!
//! * cartesian: `u_a = delta_a / (2 r_max) + 1/2`, `r_max` the largest
//!   componentwise offset magnitude
//! * polar: `(rho / rho_max, (atan2(dy, dx) + pi) / 2pi)`
//! * spherical: `(rho / rho_max, azimuth as polar, inclination / pi)`
//! * degree: `deg(j) / max_v deg(v)`
//!
//! A zero offset under polar or spherical coordinates maps to radius 0 with
//! all angles at 0.5.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PseudoKind {
    Cartesian2,
    Cartesian3,
    Polar2,
    Spherical3,
    Degree1,
}

impl PseudoKind {
    pub fn dim(self) -> usize {
        match self {
            PseudoKind::Cartesian2 | PseudoKind::Polar2 => 2,
            PseudoKind::Cartesian3 | PseudoKind::Spherical3 => 3,
            PseudoKind::Degree1 => 1,
        }
    }

    /// Required position dimension, `None` for degree coordinates.
    pub fn position_dim(self) -> Option<usize> {
        match self {
            PseudoKind::Degree1 => None,
            k => Some(k.dim()),
        }
    }

    /// Per-dimension periodicity: angle axes wrap around.
    pub fn closed_dims(self) -> Vec<bool> {
        match self {
            PseudoKind::Polar2 => vec![false, true],
            PseudoKind::Spherical3 => vec![false, true, false],
            k => vec![false; k.dim()],
        }
    }

    /// Resolves a config key (`cartesian`, `polar`, `spherical`, `degree`,
    /// or an explicit `cartesian2`/`cartesian3`). Plain `cartesian` picks
    /// the dimension from the positions.
    pub fn from_key(key: &str, position_dim: usize) -> Result<PseudoKind> {
        match key {
            "cartesian" => match position_dim {
                2 => Ok(PseudoKind::Cartesian2),
                3 => Ok(PseudoKind::Cartesian3),
                d => Err(Error::InvalidConfig(format!(
                    "cartesian pseudo-coordinates need 2D or 3D positions, got {d}D"
                ))),
            },
            "cartesian2" => Ok(PseudoKind::Cartesian2),
            "cartesian3" => Ok(PseudoKind::Cartesian3),
            "polar" | "polar2" => Ok(PseudoKind::Polar2),
            "spherical" | "spherical3" => Ok(PseudoKind::Spherical3),
            "degree" | "degree1" => Ok(PseudoKind::Degree1),
            other => Err(Error::InvalidConfig(format!("unknown pseudo-coordinate kind `{other}`"))),
        }
    }

    /// Unambiguous name, accepted by [`PseudoKind::from_key`].
    pub fn name(self) -> &'static str {
        match self {
            PseudoKind::Cartesian2 => "cartesian2",
            PseudoKind::Cartesian3 => "cartesian3",
            k => k.key(),
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            PseudoKind::Cartesian2 | PseudoKind::Cartesian3 => "cartesian",
            PseudoKind::Polar2 => "polar",
            PseudoKind::Spherical3 => "spherical",
            PseudoKind::Degree1 => "degree",
        }
    }
}

/// A pseudo-coordinate kind together with its fitted scale
/// (`r_max`, `rho_max` or the maximum degree).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PseudoSpec {
    pub kind: PseudoKind,
    pub scale: f64,
}

/// Fits the scale on `graph` and fills its pseudo-coordinates.
pub fn fit_and_apply(graph: Graph, kind: PseudoKind) -> Result<(Graph, PseudoSpec)> {
    check_positions(&graph, kind)?;
    if graph.num_edges() == 0 {
        let spec = PseudoSpec { kind, scale: 1.0 };
        let g = graph.with_pseudo(Matrix::zeros(0, kind.dim()))?;
        return Ok((g, spec));
    }
    let scale = match kind {
        PseudoKind::Cartesian2 | PseudoKind::Cartesian3 => offsets(&graph)
            .map(|d| d.iter().fold(0.0f64, |m, x| m.max(x.abs())))
            .fold(0.0, f64::max),
        PseudoKind::Polar2 | PseudoKind::Spherical3 => offsets(&graph)
            .map(|d| d.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max),
        PseudoKind::Degree1 => graph.max_degree() as f64,
    };
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::DegenerateGeometry(format!(
            "all edge offsets vanish, cannot scale {} coordinates",
            kind.key()
        )));
    }
    let spec = PseudoSpec { kind, scale };
    let g = recompute_pseudo(graph, &spec)?;
    Ok((g, spec))
}

/// Recomputes pseudo-coordinates from current positions with a fixed scale.
///
/// Fails if an offset exceeds the fitted scale.
pub fn recompute_pseudo(graph: Graph, spec: &PseudoSpec) -> Result<Graph> {
    check_positions(&graph, spec.kind)?;
    if !(spec.scale > 0.0) {
        return Err(Error::InvalidArgument(format!("pseudo scale must be positive, got {}", spec.scale)));
    }
    let d = spec.kind.dim();
    let mut out = Vec::with_capacity(graph.num_edges() * d);
    let s = spec.scale;
    match spec.kind {
        PseudoKind::Degree1 => {
            let deg = graph.degrees();
            for &j in graph.targets() {
                out.push(deg[j] as f64 / s);
            }
        }
        PseudoKind::Cartesian2 | PseudoKind::Cartesian3 => {
            for delta in offsets(&graph) {
                out.extend(delta.iter().map(|x| x / (2.0 * s) + 0.5));
            }
        }
        PseudoKind::Polar2 => {
            for delta in offsets(&graph) {
                let rho = delta[0].hypot(delta[1]);
                if rho == 0.0 {
                    out.extend([0.0, 0.5]);
                } else {
                    out.extend([rho / s, azimuth(delta[0], delta[1])]);
                }
            }
        }
        PseudoKind::Spherical3 => {
            for delta in offsets(&graph) {
                let rho = (delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]).sqrt();
                if rho == 0.0 {
                    out.extend([0.0, 0.5, 0.5]);
                } else {
                    let incl = (delta[2] / rho).clamp(-1.0, 1.0).acos() / PI;
                    out.extend([rho / s, azimuth(delta[0], delta[1]), incl]);
                }
            }
        }
    }
    if let Some(bad) = out.iter().position(|u| !(0.0..=1.0).contains(u)) {
        return Err(Error::InvalidArgument(format!(
            "edge {} lies outside the fitted scale {s} (u = {})",
            bad / d,
            out[bad]
        )));
    }
    let pseudo = Matrix::from_vec(graph.num_edges(), d, out)?;
    graph.with_pseudo(pseudo)
}

fn azimuth(dx: f64, dy: f64) -> f64 {
    ((dy.atan2(dx) + PI) / (2.0 * PI)).clamp(0.0, 1.0)
}

fn check_positions(graph: &Graph, kind: PseudoKind) -> Result<()> {
    let Some(need) = kind.position_dim() else {
        return Ok(());
    };
    match graph.positions() {
        None => Err(Error::MissingData(format!("{} coordinates need node positions", kind.key()))),
        Some(p) if p.cols() != need => Err(Error::InvalidArgument(format!(
            "{:?} needs {need}D positions, graph has {}D",
            kind,
            p.cols()
        ))),
        Some(_) => Ok(()),
    }
}

/// `pos(j) - pos(i)` for every edge, in edge order.
fn offsets(graph: &Graph) -> impl Iterator<Item = Vec<f64>> + '_ {
    let pos = graph.positions().expect("positions checked");
    graph.edges().map(move |(i, j)| {
        pos.row(j)
            .iter()
            .zip(pos.row(i))
            .map(|(a, b)| a - b)
            .collect()
    })
}
