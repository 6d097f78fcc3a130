//! Alternating augmented-Lagrangian solver for the irregular low-rank plus
//! sparse decomposition, and the matrix RPCA baseline.
//!
//! Each iteration:
//! 1. linearizes the negative global nuclear-norm term at the current
//!    low-rank estimate (skipped when `beta == 0`);
//! 2. shrinks every region's padded block `complement (+) A` with the
//!    Schatten-p proximal step, where `A = X - S + (Y + beta T) / mu`;
//! 3. soft-thresholds `X - L + Y / mu` inside each region at `lambda_i / mu`;
//! 4. updates the multiplier and the penalty `mu <- min(rho mu, mu_max)`.
//!
//! The loop stops once `max |X - L - S| <= epsilon`.

use crate::error::{Error, Result};
use crate::regions::{extract, lambda_for, regions_from_labels, scatter, LabelMap, Region};
use crate::tensor::{
    checked_svd,
    matrix_nuclear_norm, nuclear_subgradient, p_shrink_tensor_with, schatten_p_norm,
    soft_threshold_scalar, unfold_mode3, Cube, ShrinkParams, ShrinkRule,
};
use nalgebra::DMatrix;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Schatten exponent in `(0, 1]`.
    pub p: f64,
    /// Sparsity scale; each region uses `alpha / sqrt(max(h, w) * bands)`.
    pub alpha: f64,
    /// Weight of the negative global nuclear norm.
    pub beta: f64,
    pub rho: f64,
    pub mu0: f64,
    pub mu_max: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub shrink_rule: ShrinkRule,
    /// Record the objective value after every iteration.
    pub track_objective: bool,
    /// Initial value of every complement cell.
    pub complement_init: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            alpha: 1.0,
            beta: 0.0,
            rho: 1.1,
            mu0: 1e-10,
            mu_max: 1e10,
            epsilon: 1e-3,
            max_iter: 500,
            shrink_rule: ShrinkRule::OneStep,
            track_objective: false,
            complement_init: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad(format!("p must lie in (0, 1], got {}", self.p));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if !(self.rho > 1.0 && self.rho.is_finite()) {
            return bad(format!("rho must exceed 1, got {}", self.rho));
        }
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return bad(format!("mu0 must be positive, got {}", self.mu0));
        }
        if !(self.mu_max >= self.mu0 && self.mu_max.is_finite()) {
            return bad(format!("mu_max must be at least mu0, got {}", self.mu_max));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if !self.complement_init.is_finite() {
            return bad("complement_init must be finite".into());
        }
        Ok(())
    }
}

/// Which ablation of the model a configuration runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// One region, convex norm, no global term.
    Trpca,
    /// Several regions, convex norm, no global term.
    M1,
    /// Schatten-p norm with `p < 1`, no global term.
    M2,
    /// The full model with the global term.
    Full,
}

impl Variant {
    pub fn of(cfg: &SolverConfig, region_count: usize) -> Self {
        if cfg.beta > 0.0 {
            Variant::Full
        } else if cfg.p < 1.0 {
            Variant::M2
        } else if region_count <= 1 {
            Variant::Trpca
        } else {
            Variant::M1
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub low_rank: Cube,
    pub sparse: Cube,
    pub multiplier: Cube,
    /// Complement cells of every region's block, region order.
    pub complements: Vec<Cube>,
    pub mu: f64,
    pub iter: usize,
    pub residual_trace: Vec<f64>,
    /// Penalty used during each iteration.
    pub mu_trace: Vec<f64>,
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub low_rank: Cube,
    pub sparse: Cube,
    pub converged: bool,
    pub iterations: usize,
    pub residual_trace: Vec<f64>,
    pub mu_trace: Vec<f64>,
    pub objective_trace: Option<Vec<f64>>,
}

/// `max |X - L - S|` for the current state.
pub fn residual(state: &SolverState, x: &Cube) -> f64 {
    residual_of(x, &state.low_rank, &state.sparse)
}

fn residual_of(x: &Cube, l: &Cube, s: &Cube) -> f64 {
    x.as_slice()
        .iter()
        .zip(l.as_slice())
        .zip(s.as_slice())
        .fold(0.0, |m, ((x, l), s)| m.max((x - l - s).abs()))
}

/// Step-by-step driver; [`solve`] runs it to completion.
pub struct Solver<'a> {
    x: &'a Cube,
    regions: Vec<Region>,
    lambdas: Vec<f64>,
    cfg: SolverConfig,
    state: SolverState,
}

impl<'a> Solver<'a> {
    pub fn new(x: &'a Cube, lm: &LabelMap, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let (rows, cols, bands) = x.dims();
        if (lm.rows(), lm.cols()) != (rows, cols) {
            return Err(Error::DimensionMismatch(format!(
                "label map is {}x{}, cube is {rows}x{cols}",
                lm.rows(),
                lm.cols()
            )));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite {
                index: x.as_slice().iter().position(|v| !v.is_finite()).unwrap(),
            });
        }
        let regions = regions_from_labels(lm)?;
        let lambdas = regions
            .iter()
            .map(|r| lambda_for(r, cfg.alpha, bands))
            .collect();
        let complements = regions
            .iter()
            .map(|r| {
                let mut block = Cube::filled(r.bbox.height, r.bbox.width, bands, cfg.complement_init);
                // region cells of a complement block are never read
                for (_, _, lr, lc) in r.local_pixels() {
                    block.tube_mut(lr, lc).fill(0.0);
                }
                block
            })
            .collect();
        let state = SolverState {
            low_rank: Cube::zeros(rows, cols, bands),
            sparse: Cube::zeros(rows, cols, bands),
            multiplier: Cube::zeros(rows, cols, bands),
            complements,
            mu: cfg.mu0,
            iter: 0,
            residual_trace: Vec::new(),
            mu_trace: Vec::new(),
            objective_trace: Vec::new(),
        };
        Ok(Self {
            x,
            regions,
            lambdas,
            cfg,
            state,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Runs one iteration and returns its feasibility residual.
    pub fn step(&mut self) -> Result<f64> {
        let x = self.x;
        let cfg = &self.cfg;
        let st = &mut self.state;
        let iteration = st.iter + 1;
        let mu = st.mu;
        let diverged = |_: Error| Error::Diverged { iteration };

        // (a) linearization of the global term
        let linear = if cfg.beta > 0.0 {
            Some(nuclear_subgradient(&st.low_rank).map_err(diverged)?)
        } else {
            None
        };

        // (b) low-rank update on every padded region block
        let inv_mu = 1.0 / mu;
        let mut target = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let t = linear.as_ref().map_or(0.0, |t| t.as_slice()[i]);
            let y = st.multiplier.as_slice()[i] + cfg.beta * t;
            target.push(x.as_slice()[i] - st.sparse.as_slice()[i] + y * inv_mu);
        }
        let (rows, cols, bands) = x.dims();
        let target = Cube::from_raw(rows, cols, bands, target);
        if !target.is_finite() {
            return Err(Error::Diverged { iteration });
        }
        let params = ShrinkParams::new(cfg.p, mu).with_rule(cfg.shrink_rule);
        let shrunk: Vec<_> = self
            .regions
            .par_iter()
            .zip(st.complements.par_iter())
            .map(|(region, comp)| {
                let mut block = extract(&target, region, comp)?;
                block.block = p_shrink_tensor_with(&block.block, &params).map_err(diverged)?;
                Ok(block)
            })
            .collect::<Result<_>>()?;
        for ((region, block), comp) in self.regions.iter().zip(&shrunk).zip(&mut st.complements) {
            *comp = scatter(block, region, &mut st.low_rank)?;
        }

        // (c) sparse update, region by region
        for (region, &lambda) in self.regions.iter().zip(&self.lambdas) {
            let tau = lambda * inv_mu;
            for &(r, c) in &region.pixels {
                let start = x.index(r, c, 0);
                for i in start..start + bands {
                    let b = x.as_slice()[i] - st.low_rank.as_slice()[i]
                        + st.multiplier.as_slice()[i] * inv_mu;
                    st.sparse.as_mut_slice()[i] = soft_threshold_scalar(b, tau);
                }
            }
        }

        // (d) multiplier and penalty
        let mut res = 0.0f64;
        for i in 0..x.len() {
            let gap = x.as_slice()[i] - st.low_rank.as_slice()[i] - st.sparse.as_slice()[i];
            res = res.max(gap.abs());
            st.multiplier.as_mut_slice()[i] += mu * gap;
        }
        if !(res.is_finite()
            && st.low_rank.is_finite()
            && st.sparse.is_finite()
            && st.multiplier.is_finite())
        {
            return Err(Error::Diverged { iteration });
        }

        if cfg.track_objective {
            let local: f64 = shrunk
                .par_iter()
                .map(|b| schatten_p_norm(&b.block, cfg.p))
                .collect::<Result<Vec<_>>>()?
                .iter()
                .sum();
            let sparse: f64 = self
                .regions
                .iter()
                .zip(&self.lambdas)
                .map(|(region, &lambda)| {
                    lambda
                        * region
                            .pixels
                            .iter()
                            .flat_map(|&(r, c)| st.sparse.tube(r, c))
                            .map(|v| v.abs())
                            .sum::<f64>()
                })
                .sum();
            let global = if cfg.beta > 0.0 {
                cfg.beta * matrix_nuclear_norm(&unfold_mode3(&st.low_rank))
            } else {
                0.0
            };
            st.objective_trace.push(local + sparse - global);
        }

        st.mu_trace.push(mu);
        st.mu = (cfg.rho * mu).min(cfg.mu_max);
        st.iter = iteration;
        st.residual_trace.push(res);
        Ok(res)
    }

    pub fn run(mut self) -> Result<Decomposition> {
        let mut converged = false;
        while self.state.iter < self.cfg.max_iter {
            if self.step()? <= self.cfg.epsilon {
                converged = true;
                break;
            }
        }
        let track = self.cfg.track_objective;
        let st = self.state;
        Ok(Decomposition {
            low_rank: st.low_rank,
            sparse: st.sparse,
            converged,
            iterations: st.iter,
            residual_trace: st.residual_trace,
            mu_trace: st.mu_trace,
            objective_trace: track.then_some(st.objective_trace),
        })
    }
}

/// Decomposes `x` into low-rank and sparse parts over the regions of `lm`.
pub fn solve(x: &Cube, lm: &LabelMap, cfg: &SolverConfig) -> Result<Decomposition> {
    Solver::new(x, lm, cfg.clone())?.run()
}

#[derive(Debug, Clone)]
pub struct MatrixDecomposition {
    pub low_rank: DMatrix<f64>,
    pub sparse: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub residual_trace: Vec<f64>,
}

fn svt(m: &DMatrix<f64>, tau: f64, iteration: usize) -> Result<DMatrix<f64>> {
    let (r, c) = m.shape();
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Diverged { iteration });
    }
    let svd = checked_svd(m)?;
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Diverged { iteration }),
    };
    let mut out = DMatrix::zeros(r, c);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let shrunk = s - tau;
        if shrunk > 0.0 {
            out.ger(shrunk, &u.column(k), &v_t.row(k).transpose(), 1.0);
        }
    }
    Ok(out)
}

/// Matrix robust PCA by the inexact augmented Lagrange multiplier method,
/// sharing the penalty schedule and stopping rule of [`solve`].
pub fn rpca_matrix(m: &DMatrix<f64>, lambda: f64, cfg: &SolverConfig) -> Result<MatrixDecomposition> {
    cfg.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            index: m.iter().position(|v| !v.is_finite()).unwrap(),
        });
    }
    let (r, c) = m.shape();
    let mut low = DMatrix::zeros(r, c);
    let mut sparse = DMatrix::<f64>::zeros(r, c);
    let mut mult = DMatrix::<f64>::zeros(r, c);
    let mut mu = cfg.mu0;
    let mut trace = Vec::new();
    let mut converged = false;
    for iteration in 1..=cfg.max_iter {
        let a = m - &sparse + &mult / mu;
        low = svt(&a, 1.0 / mu, iteration)?;
        let b = m - &low + &mult / mu;
        sparse = b.map(|v| soft_threshold_scalar(v, lambda / mu));
        let gap = m - &low - &sparse;
        mult += &gap * mu;
        mu = (cfg.rho * mu).min(cfg.mu_max);
        let res = gap.amax();
        if !res.is_finite() || mult.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration });
        }
        trace.push(res);
        if res <= cfg.epsilon {
            converged = true;
            break;
        }
    }
    Ok(MatrixDecomposition {
        low_rank: low,
        sparse,
        converged,
        iterations: trace.len(),
        residual_trace: trace,
    })
}
