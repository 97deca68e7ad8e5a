use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelParams, SystemState};
use crate::noise::NoiseBasis;
use crate::spectral::{
    dealias, gradient, homogeneous_norm_sq, integrate_product, laplacian, lp_norm, ScalarField, VectorField,
};

macro_rules! ledger_row {
    ($($(#[doc = $d:literal])* $name:ident),* $(,)?) => {
        /// One ledger sample. Norms are in `L²(T²)` with the area factor;
        /// `int_*` columns are trapezoid integrals from `t = 0`,
        /// `mart_*` columns are Itô sums from `t = 0`.
        #[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
        pub struct LedgerRow {
            $($(#[doc = $d])* pub $name: f64,)*
        }

        impl LedgerRow {
            /// CSV header, in column order.
            pub const COLUMNS: &'static [&'static str] = &[$(stringify!($name)),*];

            pub fn values(&self) -> Vec<f64> {
                vec![$(self.$name),*]
            }

            pub fn from_values(v: &[f64]) -> Option<Self> {
                if v.len() != Self::COLUMNS.len() {
                    return None;
                }
                let mut it = v.iter().copied();
                Some(LedgerRow { $($name: it.next()?,)* })
            }
        }
    };
}

ledger_row! {
    t,
    /// `‖q‖_{L²}`
    q_l2,
    /// `‖q‖_{L⁴}`
    q_l4,
    /// `‖Λ^{-1/2}q‖`
    q_h_minus_half,
    /// `‖Λ^{1/2}q‖`
    q_h_half,
    /// `‖∇q‖`
    q_grad,
    /// `‖Λ^{3/2}q‖`
    q_h_three_half,
    u_l2,
    u_grad,
    /// `‖Δu‖`
    u_lap,
    /// `‖Λ^{-1/2}q‖² + ‖u‖²`
    energy,
    /// `log(1 + ‖Λ^{k+3/2}q‖² + ‖Λ^{k+3}u‖²)`
    log_sobolev,
    /// `K = ‖∇Φ‖²_∞ + ‖∇u‖² + ‖∇u‖ + ‖q‖²_{L⁴} + ‖q‖⁴_{L⁴} + ‖Δu‖²`
    rcond,
    /// `2(ΔΦ, Λ^{-1}q) − 2(q∇Φ, u) + 2(f, u)`
    sources,
    int_q_l2_sq,
    int_grad_u_sq,
    int_q_h_half_sq,
    int_lap_u_sq,
    int_q_l4_pow4,
    int_q_l4_pow12,
    int_rcond,
    int_log_sobolev,
    int_sources,
    /// `Σ 2(Λ^{-1/2}g̃ΔW, Λ^{-1/2}q) + 2(gΔW, u)`
    mart_energy,
    /// `Σ 2(g̃ΔW, q)`
    mart_q_l2,
    /// `Σ −2(gΔW, Δu)`
    mart_grad_u,
    /// `(‖Λ^{-1/2}g̃‖² + ‖g‖²)·t`
    ito_energy,
    /// `‖g̃‖²·t`
    ito_q_l2,
    /// `‖∇g‖²·t`
    ito_grad_u,
}

/// Norms of the sources, shared by all ledgers of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceNorms {
    /// `‖Λ^{-1/2}g̃‖²`
    pub charge_noise_h_minus_half_sq: f64,
    /// `‖g̃‖²`
    pub charge_noise_l2_sq: f64,
    /// `‖g̃‖⁴_{L⁴}`
    pub charge_noise_l4_pow4: f64,
    /// `‖g‖²`
    pub velocity_noise_l2_sq: f64,
    /// `‖∇g‖²`
    pub velocity_noise_grad_sq: f64,
    /// `‖f‖²`
    pub forcing_l2_sq: f64,
    /// `‖∇Φ‖²_∞`
    pub grad_potential_sup_sq: f64,
}

impl SourceNorms {
    pub fn new(params: &ModelParams, basis: &NoiseBasis) -> Self {
        let gp = gradient(&params.potential);
        let sup = gp
            .magnitude_padded(2 * params.grid().n())
            .into_iter()
            .fold(0.0f64, f64::max);
        SourceNorms {
            charge_noise_h_minus_half_sq: basis.charge_norm_sq(-0.5),
            charge_noise_l2_sq: basis.charge_norm_sq(0.0),
            charge_noise_l4_pow4: basis.charge_lp_pow(4),
            velocity_noise_l2_sq: basis.velocity_norm_sq(0.0),
            velocity_noise_grad_sq: basis.velocity_norm_sq(1.0),
            forcing_l2_sq: params.forcing.l2_norm_sq(),
            grad_potential_sup_sq: sup * sup,
        }
    }

    /// `‖Λ^{-1/2}g̃‖² + ‖g‖²`
    pub fn energy_ito_rate(&self) -> f64 {
        self.charge_noise_h_minus_half_sq + self.velocity_noise_l2_sq
    }

    pub fn is_noise_free(&self) -> bool {
        self.charge_noise_l2_sq == 0.0 && self.velocity_noise_l2_sq == 0.0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerMeta {
    pub n: usize,
    pub dt: f64,
    pub stride: usize,
    pub seed: u64,
    pub path: u64,
    pub sobolev_k: f64,
    pub sources: SourceNorms,
}

/// Time series of energy and norm diagnostics for one trajectory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub meta: LedgerMeta,
    pub rows: Vec<LedgerRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("ledger I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("ledger header does not match the expected columns")]
    Header,
    #[error("malformed ledger row {0}")]
    Row(usize),
}

impl EnergyLedger {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn column(&self, f: impl Fn(&LedgerRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn first(&self) -> &LedgerRow {
        &self.rows[0]
    }

    pub fn last(&self) -> &LedgerRow {
        self.rows.last().expect("ledger has at least one row")
    }

    /// Row whose time is closest to `t`.
    pub fn at(&self, t: f64) -> &LedgerRow {
        self.rows
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("ledger has at least one row")
    }

    /// CSV with a header line and 17 significant digits per value.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", LedgerRow::COLUMNS.join(","))?;
        for r in &self.rows {
            let line: Vec<String> = r.values().iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl BufRead) -> Result<Vec<LedgerRow>, LedgerError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(LedgerError::Header)??;
        if header.trim() != LedgerRow::COLUMNS.join(",") {
            return Err(LedgerError::Header);
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let row = vals.ok().and_then(|v| LedgerRow::from_values(&v)).ok_or(LedgerError::Row(i + 1))?;
            rows.push(row);
        }
        Ok(rows)
    }
}

/// Which diagnostics the recorder evaluates beyond the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerSettings {
    /// Index `k` of the `log_sobolev` column.
    #[serde(default)]
    pub sobolev_k: f64,
}

impl Default for LedgerSettings {
    fn default() -> Self {
        LedgerSettings { sobolev_k: 0.0 }
    }
}

/// Pointwise quantities of one state.
#[derive(Clone, Copy, Debug, Default)]
struct Instant {
    q_l2_sq: f64,
    q_l4: f64,
    q_h_minus_half_sq: f64,
    q_h_half_sq: f64,
    q_grad_sq: f64,
    q_h_three_half_sq: f64,
    u_l2_sq: f64,
    u_grad_sq: f64,
    u_lap_sq: f64,
    log_sobolev: f64,
    rcond: f64,
    sources: f64,
}

/// Builds ledger rows along a trajectory.
#[derive(Clone, Debug)]
pub struct LedgerRecorder {
    meta: LedgerMeta,
    lap_potential: ScalarField,
    grad_potential: Option<VectorField>,
    forcing: VectorField,
    last: Option<(f64, Instant)>,
    integrals: [f64; 9],
    mart: [f64; 3],
}

impl LedgerRecorder {
    pub fn new(params: &ModelParams, basis: &NoiseBasis, settings: &LedgerSettings) -> Self {
        let grad_potential = params.has_potential().then(|| gradient(&dealias(&params.potential)));
        LedgerRecorder {
            meta: LedgerMeta {
                n: params.grid().n(),
                sobolev_k: settings.sobolev_k,
                sources: SourceNorms::new(params, basis),
                ..Default::default()
            },
            lap_potential: laplacian(&params.potential),
            grad_potential,
            forcing: params.forcing.clone(),
            last: None,
            integrals: [0.0; 9],
            mart: [0.0; 3],
        }
    }

    pub fn meta(&self) -> &LedgerMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut LedgerMeta {
        &mut self.meta
    }

    fn instant(&self, s: &SystemState) -> Instant {
        let k = self.meta.sobolev_k;
        let q_l4 = lp_norm(&s.q, 4);
        let u_grad_sq = s.u.weighted_norm_sq(|i| s.grid().k_sq()[i]);
        let u_lap_sq = s.u.weighted_norm_sq(|i| s.grid().k_sq()[i].powi(2));
        let hq = homogeneous_norm_sq(&s.q, k + 1.5);
        let hu = homogeneous_norm_sq(&s.u.x, k + 3.0) + homogeneous_norm_sq(&s.u.y, k + 3.0);
        let rcond = self.meta.sources.grad_potential_sup_sq
            + u_grad_sq
            + u_grad_sq.sqrt()
            + q_l4 * q_l4
            + q_l4.powi(4)
            + u_lap_sq;
        let mut sources = 2.0 * self.forcing.dot(&s.u);
        if !self.lap_potential.is_zero() {
            let inv = crate::spectral::lambda_unchecked(&s.q, -1.0);
            sources += 2.0 * self.lap_potential.dot(&inv);
        }
        if let Some(gp) = &self.grad_potential {
            let qgu = integrate_product(&[&s.q, &gp.x, &s.u.x]) + integrate_product(&[&s.q, &gp.y, &s.u.y]);
            sources -= 2.0 * qgu;
        }
        Instant {
            q_l2_sq: s.q.l2_norm_sq(),
            q_l4,
            q_h_minus_half_sq: homogeneous_norm_sq(&s.q, -0.5),
            q_h_half_sq: homogeneous_norm_sq(&s.q, 0.5),
            q_grad_sq: homogeneous_norm_sq(&s.q, 1.0),
            q_h_three_half_sq: homogeneous_norm_sq(&s.q, 1.5),
            u_l2_sq: s.u.l2_norm_sq(),
            u_grad_sq,
            u_lap_sq,
            log_sobolev: (hq + hu).ln_1p(),
            rcond,
            sources,
        }
    }

    fn integrands(x: &Instant) -> [f64; 9] {
        [
            x.q_l2_sq,
            x.u_grad_sq,
            x.q_h_half_sq,
            x.u_lap_sq,
            x.q_l4.powi(4),
            x.q_l4.powi(12),
            x.rcond,
            x.log_sobolev,
            x.sources,
        ]
    }

    /// Accumulates the Itô sums for one step from the pre-step state and
    /// the noise increment `(g̃ΔW, gΔW)`.
    pub fn add_martingale(&mut self, s: &SystemState, dq: &ScalarField, du: &VectorField) {
        let k_sq = s.grid().k_sq();
        let e = 2.0 * dq.weighted_dot(&s.q, |i| if i == 0 { 0.0 } else { 1.0 / k_sq[i].sqrt() }) + 2.0 * du.dot(&s.u);
        self.mart[0] += e;
        self.mart[1] += 2.0 * dq.dot(&s.q);
        self.mart[2] += 2.0 * du.weighted_dot(&s.u, |i| k_sq[i]);
    }

    /// Samples `s`, extending the trapezoid integrals from the previous sample.
    pub fn record(&mut self, s: &SystemState) -> LedgerRow {
        let x = self.instant(s);
        let cur = Self::integrands(&x);
        if let Some((t0, prev)) = self.last {
            let h = s.t - t0;
            let p = Self::integrands(&prev);
            for i in 0..cur.len() {
                self.integrals[i] += 0.5 * h * (p[i] + cur[i]);
            }
        }
        self.last = Some((s.t, x));
        let src = &self.meta.sources;
        let i = &self.integrals;
        LedgerRow {
            t: s.t,
            q_l2: x.q_l2_sq.sqrt(),
            q_l4: x.q_l4,
            q_h_minus_half: x.q_h_minus_half_sq.sqrt(),
            q_h_half: x.q_h_half_sq.sqrt(),
            q_grad: x.q_grad_sq.sqrt(),
            q_h_three_half: x.q_h_three_half_sq.sqrt(),
            u_l2: x.u_l2_sq.sqrt(),
            u_grad: x.u_grad_sq.sqrt(),
            u_lap: x.u_lap_sq.sqrt(),
            energy: x.q_h_minus_half_sq + x.u_l2_sq,
            log_sobolev: x.log_sobolev,
            rcond: x.rcond,
            sources: x.sources,
            int_q_l2_sq: i[0],
            int_grad_u_sq: i[1],
            int_q_h_half_sq: i[2],
            int_lap_u_sq: i[3],
            int_q_l4_pow4: i[4],
            int_q_l4_pow12: i[5],
            int_rcond: i[6],
            int_log_sobolev: i[7],
            int_sources: i[8],
            mart_energy: self.mart[0],
            mart_q_l2: self.mart[1],
            mart_grad_u: self.mart[2],
            ito_energy: src.energy_ito_rate() * s.t,
            ito_q_l2: src.charge_noise_l2_sq * s.t,
            ito_grad_u: src.velocity_noise_grad_sq * s.t,
        }
    }
}
