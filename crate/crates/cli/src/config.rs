//! Declarative run configuration: one TOML file with a section per
//! experiment. Missing sections and fields fall back to the defaults below;
//! command-line flags override file values.

use serde::Deserialize;

use crate::CliError;

fn default_seed() -> u64 {
    0
}

fn default_out() -> String {
    "runs".to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: String,
    #[serde(default)]
    pub eikonal1d_grid: EikonalGridConfig,
    #[serde(default)]
    pub eikonal1d_nn: EikonalNnConfig,
    #[serde(default)]
    pub obstacle: ObstacleConfig,
    #[serde(default)]
    pub isaacs2d: IsaacsConfig,
    #[serde(default)]
    pub analyze_jacobian: AnalyzeJacobianConfig,
}

impl Default for Config {
    fn default() -> Self {
        toml::from_str("").expect("empty config must deserialize")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EikonalGridConfig {
    /// Cold-start runs, one per grid size n (spacing 1/n).
    pub grid_sizes: Vec<usize>,
    /// Multilevel schedule of grid sizes, coarse to fine.
    pub schedule: Vec<usize>,
    pub lambda: f64,
    pub alpha: f64,
    pub source: f64,
    pub mu_b: f64,
    pub q: f64,
    pub step: f64,
    pub max_iters: usize,
    pub tol_inf: f64,
    pub record_every: usize,
}

impl Default for EikonalGridConfig {
    fn default() -> Self {
        Self {
            grid_sizes: vec![20, 40, 80, 160],
            schedule: vec![20, 40, 80, 160],
            lambda: 1.0,
            alpha: 1.0,
            source: 1.0,
            mu_b: 10.0,
            q: 2.0,
            step: 1e-3,
            max_iters: 100_000,
            tol_inf: 1e-3,
            record_every: 200,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EikonalNnConfig {
    pub n_seeds: usize,
    /// Fixed-spacing baseline runs.
    pub fixed_dx: Vec<f64>,
    /// Damping used by the fixed runs and as the final schedule value.
    pub lambda: f64,
    pub alpha: f64,
    pub mu_b: f64,
    pub schedule_dx: Vec<f64>,
    pub schedule_lambda: Vec<f64>,
    pub hidden: Vec<usize>,
    pub lipschitz_init: f64,
    pub lr: f64,
    pub max_iters: usize,
    pub n0: usize,
    pub stop_window: usize,
    pub stop_threshold: f64,
    pub eval_points: usize,
    pub record_every: usize,
}

impl Default for EikonalNnConfig {
    fn default() -> Self {
        Self {
            n_seeds: 20,
            fixed_dx: vec![0.05, 0.01, 0.001],
            lambda: 0.1,
            alpha: 1.0,
            mu_b: 10.0,
            schedule_dx: vec![1.0 / 20.0, 1.0 / 100.0, 1.0 / 500.0, 1.0 / 1000.0],
            schedule_lambda: vec![2.0, 1.0, 0.5, 0.1],
            hidden: vec![64, 64, 64],
            lipschitz_init: 1.0,
            lr: 1e-3,
            max_iters: 10_000,
            n0: 20,
            stop_window: 50,
            stop_threshold: 1e-3,
            eval_points: 1001,
            record_every: 200,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleConfig {
    pub dim: usize,
    pub hidden: Vec<usize>,
    pub lipschitz_init: f64,
    pub lr: f64,
    pub iters_per_round: usize,
    pub batch_interior: usize,
    pub batch_initial: usize,
    pub initial_weight: f64,
    pub lxf_dx: Vec<f64>,
    pub lxf_dt: Vec<f64>,
    pub onesided_dx: Vec<f64>,
    pub onesided_dt: Vec<f64>,
    /// Spacing of the dense evaluation grid for the reports.
    pub eval_h: f64,
    pub slice_times: Vec<f64>,
    pub record_every: usize,
}

impl Default for ObstacleConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            hidden: vec![64, 64, 64],
            lipschitz_init: 2.0,
            lr: 1e-3,
            iters_per_round: 3000,
            batch_interior: 512,
            batch_initial: 256,
            initial_weight: 10.0,
            lxf_dx: vec![0.3, 0.2, 0.1],
            lxf_dt: vec![0.15, 0.1, 0.05],
            onesided_dx: vec![0.2, 0.1, 0.05],
            onesided_dt: vec![0.1, 0.05, 0.025],
            eval_h: 0.05,
            slice_times: vec![0.0, 1.0, 2.0],
            record_every: 200,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsaacsConfig {
    /// Cells per axis of the embedding box; spacing is 4/n.
    pub grid_sizes: Vec<usize>,
    pub r_inner: f64,
    pub r_outer: f64,
    pub kappa: f64,
    pub v_s: f64,
    pub a: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    /// Boundary perturbation for the comparison-principle report.
    pub perturbation: f64,
    /// Also train the network variant and report its gap to the reference.
    pub train_nn: bool,
    pub nn_hidden: Vec<usize>,
    pub nn_iters: usize,
    pub nn_batch: usize,
    pub nn_lr: f64,
    pub nn_mu_b: f64,
    /// Collocation stencil spacing for the network residual.
    pub nn_h: f64,
}

impl Default for IsaacsConfig {
    fn default() -> Self {
        Self {
            grid_sizes: vec![100, 200],
            r_inner: 0.5,
            r_outer: 2f64.sqrt(),
            kappa: 0.1,
            v_s: 0.5,
            a: 0.2,
            sigma_x: 0.5,
            sigma_y: 0.2,
            newton_tol: 1e-10,
            newton_max_iters: 400,
            perturbation: 0.01,
            train_nn: false,
            nn_hidden: vec![64, 64, 64],
            nn_iters: 5000,
            nn_batch: 128,
            nn_lr: 1e-3,
            nn_mu_b: 10.0,
            nn_h: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeJacobianConfig {
    pub grid_sizes: Vec<usize>,
    pub lambda: f64,
    pub alpha: f64,
    pub source: f64,
    pub mu_b: f64,
    pub q: f64,
}

impl Default for AnalyzeJacobianConfig {
    fn default() -> Self {
        Self {
            grid_sizes: vec![20, 40, 80, 160],
            lambda: 1.0,
            alpha: 1.0,
            source: 1.0,
            mu_b: 10.0,
            q: 2.0,
        }
    }
}

fn require(cond: bool, field: &str, msg: &str) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(format!("{field}: {msg}")))
    }
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + 1e-15)
}

impl Config {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Schema checks with field paths in the messages.
    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.eikonal1d_grid;
        require(!g.grid_sizes.is_empty(), "eikonal1d_grid.grid_sizes", "must not be empty")?;
        require(
            g.grid_sizes.iter().all(|&n| n >= 2),
            "eikonal1d_grid.grid_sizes",
            "entries must be >= 2",
        )?;
        require(
            g.schedule.windows(2).all(|w| w[1] >= w[0]),
            "eikonal1d_grid.schedule",
            "grid sizes must be non-decreasing (spacing non-increasing)",
        )?;
        require(g.q > 1.0, "eikonal1d_grid.q", "must be > 1")?;
        require(g.mu_b > 0.0, "eikonal1d_grid.mu_b", "must be > 0")?;
        require(g.step > 0.0, "eikonal1d_grid.step", "must be > 0")?;
        require(g.tol_inf > 0.0, "eikonal1d_grid.tol_inf", "must be > 0")?;
        require(g.max_iters >= 1, "eikonal1d_grid.max_iters", "must be >= 1")?;

        let n = &self.eikonal1d_nn;
        require(n.n_seeds >= 1, "eikonal1d_nn.n_seeds", "must be >= 1")?;
        require(
            n.schedule_dx.len() == n.schedule_lambda.len(),
            "eikonal1d_nn.schedule_lambda",
            "must match schedule_dx in length",
        )?;
        require(
            non_increasing(&n.schedule_dx),
            "eikonal1d_nn.schedule_dx",
            "must be non-increasing",
        )?;
        require(
            non_increasing(&n.schedule_lambda),
            "eikonal1d_nn.schedule_lambda",
            "must be non-increasing",
        )?;
        require(n.lipschitz_init > 0.0, "eikonal1d_nn.lipschitz_init", "must be > 0")?;
        require(n.n0 >= 1, "eikonal1d_nn.n0", "must be >= 1")?;
        require(n.eval_points >= 2, "eikonal1d_nn.eval_points", "must be >= 2")?;

        let o = &self.obstacle;
        require((1..=5).contains(&o.dim), "obstacle.dim", "must be in 1..=5")?;
        require(
            o.lxf_dx.len() == o.lxf_dt.len(),
            "obstacle.lxf_dt",
            "must match lxf_dx in length",
        )?;
        require(
            o.onesided_dx.len() == o.onesided_dt.len(),
            "obstacle.onesided_dt",
            "must match onesided_dx in length",
        )?;
        require(non_increasing(&o.lxf_dx), "obstacle.lxf_dx", "must be non-increasing")?;
        require(non_increasing(&o.onesided_dx), "obstacle.onesided_dx", "must be non-increasing")?;
        require(o.eval_h > 0.0, "obstacle.eval_h", "must be > 0")?;

        let i = &self.isaacs2d;
        require(!i.grid_sizes.is_empty(), "isaacs2d.grid_sizes", "must not be empty")?;
        require(
            i.r_inner > 0.0 && i.r_outer > i.r_inner,
            "isaacs2d.r_outer",
            "radii must satisfy 0 < r_inner < r_outer",
        )?;
        for &n in &i.grid_sizes {
            let spacing = 4.0 / n as f64;
            require(
                spacing < (i.r_outer - i.r_inner) / 4.0,
                "isaacs2d.grid_sizes",
                "spacing 4/n too coarse to separate the circles",
            )?;
        }

        let a = &self.analyze_jacobian;
        require(!a.grid_sizes.is_empty(), "analyze_jacobian.grid_sizes", "must not be empty")?;
        require(a.q > 1.0, "analyze_jacobian.q", "must be > 1")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn error_names_field() {
        let mut cfg = Config::default();
        cfg.eikonal1d_nn.schedule_dx = vec![0.01, 0.05];
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("eikonal1d_nn.schedule_dx"));
    }

    #[test]
    fn toml_overrides_defaults() {
        let cfg: Config = toml::from_str(
            r#"
            seed = 7
            [eikonal1d_grid]
            grid_sizes = [10]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.eikonal1d_grid.grid_sizes, vec![10]);
        // Untouched sections keep defaults.
        assert_eq!(cfg.eikonal1d_nn.n_seeds, 20);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let res: Result<Config, _> = toml::from_str("[eikonal1d_grid]\nbogus = 1\n");
        assert!(res.is_err());
    }
}
