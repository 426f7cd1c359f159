//! Python bindings: schedules, mazes, datasets, retrieval, local projection,
//! maze planners and the guidance-gap experiment.

use lomap_core::denoiser::TrainConfig;
use lomap_core::experiment::{
    artifact_sweep, pair_conditioning, paired_plans, sample_pairs, stream_rng, MazeExperiment, MazeModel,
};
use lomap_core::guidance::{gap_scaling_experiment, ReturnFamily};
use lomap_core::io::{decode_dataset, encode_dataset, ArtifactMeta};
use lomap_core::lomap::{self as lm, ProjectionMode};
use lomap_core::planner::PlannerConfig;
use lomap_core::synthworld::{self as sw, DatasetConfig, Endpoints, EnvParams, PointMassEnv};
use lomap_core::{Error, RowMatrix, ScheduleKind};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use sha2::{Digest, Sha256};
use std::sync::Arc;

fn err(e: Error) -> PyErr {
    match e {
        Error::Numerical(_) | Error::Degenerate(_) => PyArithmeticError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<RowMatrix> {
    RowMatrix::from_rows(rows).map_err(err)
}

fn to_lists(m: &RowMatrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

#[pyclass(frozen, name = "NoiseSchedule")]
struct PySchedule(lomap_core::NoiseSchedule);

#[pymethods]
impl PySchedule {
    #[new]
    #[pyo3(signature = (steps = 20, kind = "cosine", beta_min = 1e-4, beta_max = 0.999))]
    fn new(steps: usize, kind: &str, beta_min: f64, beta_max: f64) -> PyResult<Self> {
        let kind: ScheduleKind = kind.parse().map_err(err)?;
        lomap_core::NoiseSchedule::build(steps, kind, beta_min, beta_max, false)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.steps()
    }

    fn betas(&self) -> Vec<f64> {
        self.0.betas().to_vec()
    }

    fn alpha_bar(&self, step: usize) -> PyResult<f64> {
        self.0.check_step(step, true).map_err(err)?;
        Ok(self.0.alpha_bar(step))
    }
}

#[pyclass(frozen, name = "Maze")]
struct PyMaze(sw::MazeSpec);

#[pymethods]
impl PyMaze {
    /// Parses a grid of `#`, `.`, `S` and `G`.
    #[new]
    #[pyo3(signature = (text, cell_size = 1.0, goal_tolerance = 0.3))]
    fn new(text: &str, cell_size: f64, goal_tolerance: f64) -> PyResult<Self> {
        sw::MazeSpec::parse(text, cell_size, goal_tolerance).map(Self).map_err(err)
    }

    #[staticmethod]
    fn four_rooms() -> Self {
        Self(sw::MazeSpec::four_rooms())
    }

    #[staticmethod]
    fn corridor() -> Self {
        Self(sw::MazeSpec::corridor())
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    #[getter]
    fn bounds(&self) -> (f64, f64) {
        self.0.bounds()
    }

    #[getter]
    fn start(&self) -> (usize, usize) {
        self.0.start_cell()
    }

    #[getter]
    fn goal(&self) -> (usize, usize) {
        self.0.goal_cell()
    }

    fn cell_center(&self, cell: (usize, usize)) -> (f64, f64) {
        let p = self.0.cell_center(cell);
        (p[0], p[1])
    }

    fn free_cells(&self) -> Vec<(usize, usize)> {
        self.0.free_cells()
    }

    /// True when any segment of the polyline crosses a wall cell.
    fn path_collides(&self, points: Vec<(f64, f64)>) -> bool {
        let pts: Vec<[f64; 2]> = points.into_iter().map(|(x, y)| [x, y]).collect();
        self.0.path_collides(&pts)
    }
}

#[pyclass(frozen, name = "Dataset")]
struct PyDataset {
    ds: sw::OfflineDataset,
    meta: ArtifactMeta,
}

#[pymethods]
impl PyDataset {
    /// Scripted-controller rollouts in `maze`.
    #[staticmethod]
    #[pyo3(signature = (maze, episodes = 1000, horizon = 17, noise = 0.3, fixed_endpoints = false, seed = 0))]
    fn generate(
        py: Python<'_>,
        maze: &PyMaze,
        episodes: usize,
        horizon: usize,
        noise: f64,
        fixed_endpoints: bool,
        seed: u64,
    ) -> PyResult<Self> {
        let config = DatasetConfig {
            episodes,
            horizon,
            noise,
            endpoints: if fixed_endpoints { Endpoints::Fixed } else { Endpoints::Random },
            ..DatasetConfig::default()
        };
        let env = PointMassEnv::new(Arc::new(maze.0.clone()), EnvParams::default()).map_err(err)?;
        let text = format!("maze={}\n{config:?}\n", maze.0.to_text());
        let meta = ArtifactMeta {
            seed,
            config_hash: Sha256::digest(text.as_bytes()).into(),
        };
        let ds = py
            .detach(|| sw::generate_offline_dataset(&env, &config, seed))
            .map_err(err)?;
        Ok(Self { ds, meta })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
        let (ds, meta) = decode_dataset(&bytes).map_err(err)?;
        Ok(Self { ds, meta })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let bytes = encode_dataset(&self.ds, &self.meta).map_err(err)?;
        std::fs::write(path, bytes).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))
    }

    fn __len__(&self) -> usize {
        self.ds.len()
    }

    /// `(horizon, state_dim, action_dim)`.
    #[getter]
    fn layout(&self) -> (usize, usize, usize) {
        let l = self.ds.layout;
        (l.horizon, l.state_dim, l.action_dim)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.meta.seed
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.meta.hash_hex()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        to_lists(&self.ds.trajectories)
    }

    fn returns(&self) -> Vec<f64> {
        self.ds.returns.clone()
    }
}

#[pyclass(frozen, name = "AnnIndex")]
struct PyIndex(lm::AnnIndex);

#[pymethods]
impl PyIndex {
    #[new]
    #[pyo3(signature = (rows, n_list, seed = 0))]
    fn new(py: Python<'_>, rows: Vec<Vec<f64>>, n_list: usize, seed: u64) -> PyResult<Self> {
        let m = Arc::new(matrix(&rows)?);
        py.detach(|| lm::AnnIndex::build(m, n_list, seed)).map(Self).map_err(err)
    }

    /// `(row id, cosine similarity)` pairs, best first.
    fn knn(&self, query: Vec<f64>, k: usize, n_probe: usize) -> PyResult<Vec<(usize, f64)>> {
        let hits = self.0.knn(&query, k, n_probe).map_err(err)?;
        Ok(hits.into_iter().map(|h| (h.id, h.similarity)).collect())
    }

    fn exact_knn(&self, query: Vec<f64>, k: usize) -> PyResult<Vec<(usize, f64)>> {
        let hits = self.0.exact_knn(&query, k).map_err(err)?;
        Ok(hits.into_iter().map(|h| (h.id, h.similarity)).collect())
    }
}

#[pyclass(frozen, name = "LocalBasis")]
struct PyBasis(lm::LocalBasis);

#[pymethods]
impl PyBasis {
    /// Fits a basis to neighbour rows, keeping `lam` of their variance.
    #[new]
    #[pyo3(signature = (neighbors, lam = 0.99, mode = "affine"))]
    fn new(neighbors: Vec<Vec<f64>>, lam: f64, mode: &str) -> PyResult<Self> {
        let mode: ProjectionMode = mode.parse().map_err(err)?;
        lm::local_basis(&matrix(&neighbors)?, lam, mode).map(Self).map_err(err)
    }

    #[getter]
    fn rank(&self) -> usize {
        self.0.rank()
    }

    #[getter]
    fn captured_variance(&self) -> f64 {
        self.0.captured_variance()
    }

    fn project(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.project(&x).map_err(err)
    }

    fn distance(&self, x: Vec<f64>) -> PyResult<f64> {
        self.0.distance(&x).map_err(err)
    }
}

/// A flat four-rooms planner trained from scratch.
#[pyclass(frozen, name = "MazePlanner")]
struct PyPlanner {
    exp: MazeExperiment,
    model: MazeModel,
}

#[pymethods]
impl PyPlanner {
    #[new]
    #[pyo3(signature = (episodes = 2000, train_steps = 40000, hidden = vec![256, 256], seed = 0))]
    fn new(py: Python<'_>, episodes: usize, train_steps: usize, hidden: Vec<usize>, seed: u64) -> PyResult<Self> {
        let mut exp = MazeExperiment::default();
        exp.data.episodes = episodes;
        exp.train = TrainConfig {
            steps: train_steps,
            hidden,
            ..exp.train
        };
        let model = py.detach(|| exp.prepare(seed)).map_err(err)?;
        Ok(Self { exp, model })
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.model.dataset.layout.horizon
    }

    #[getter]
    fn final_loss(&self) -> Option<f64> {
        self.model.report.epoch_losses.last().copied()
    }

    /// Plans between two free cells; returns the `[x, y, vx, vy]` states.
    #[pyo3(signature = (start, goal, projection = true, seed = 0))]
    fn plan(
        &self,
        py: Python<'_>,
        start: (usize, usize),
        goal: (usize, usize),
        projection: bool,
        seed: u64,
    ) -> PyResult<Vec<Vec<f64>>> {
        let maze = self.model.env.maze();
        for c in [start, goal] {
            if maze.is_wall(c.0, c.1) {
                return Err(PyValueError::new_err(format!("cell {c:?} is not free")));
            }
        }
        let planner = self.model.planner().map_err(err)?;
        let config = PlannerConfig {
            conditioning: pair_conditioning(maze, (start, goal), self.horizon()),
            projection: projection.then(|| self.exp.projection.clone()),
            ..PlannerConfig::default()
        };
        let plan = py
            .detach(|| planner.sample(&config, &mut stream_rng(seed, 0)))
            .map_err(err)?;
        Ok(plan.states().map(<[f64]>::to_vec).collect())
    }

    /// Paired artifact ratios `(baseline, lomap)` over random start/goal pairs.
    #[pyo3(signature = (pairs = 20, plans_per_pair = 10, seed = 0))]
    fn artifact_ratio(&self, py: Python<'_>, pairs: usize, plans_per_pair: usize, seed: u64) -> PyResult<(f64, f64)> {
        if pairs == 0 || plans_per_pair == 0 {
            return Err(PyValueError::new_err("need at least one pair and one plan"));
        }
        let maze = self.model.env.maze();
        let budget = self.exp.path_budget().map_err(err)?;
        let planner = self.model.planner().map_err(err)?;
        py.detach(|| {
            let cells = sample_pairs(maze, budget, pairs, seed)?;
            let plans = paired_plans(&planner, maze, &cells, plans_per_pair, &self.exp.projection, seed)?;
            let b = artifact_sweep(&plans.baseline, maze, &[plans_per_pair])?;
            let l = artifact_sweep(&plans.lomap, maze, &[plans_per_pair])?;
            Ok((b[0].artifact_ratio, l[0].artifact_ratio))
        })
        .map_err(err)
    }
}

/// Rows of `(dim, mean gap, standard error)` and the optional fit.
type GapResult = (Vec<(usize, f64, f64)>, Option<(f64, f64)>);

/// Mean guidance gap per dimension and the log-log `(slope, intercept)`,
/// or `None` when the gap is not resolved above Monte-Carlo noise.
#[pyfunction]
#[pyo3(signature = (dims, step = 10, family = "quadratic", samples = 100_000, trials = 20, seed = 0))]
fn gap_scaling(
    py: Python<'_>,
    dims: Vec<usize>,
    step: usize,
    family: &str,
    samples: usize,
    trials: usize,
    seed: u64,
) -> PyResult<GapResult> {
    let family: ReturnFamily = family.parse().map_err(err)?;
    let schedule = lomap_core::experiment::cosine_schedule(20).map_err(err)?;
    let r = py
        .detach(|| gap_scaling_experiment(&dims, step, family, &schedule, samples, trials, seed))
        .map_err(err)?;
    let rows = r.rows.iter().map(|x| (x.dim, x.delta_mean, x.delta_stderr)).collect();
    Ok((rows, r.fit))
}

/// Mean realism of `samples` against the `dataset` rows.
#[pyfunction]
#[pyo3(signature = (samples, dataset, k_nn = 5))]
fn realism_score(samples: Vec<Vec<f64>>, dataset: Vec<Vec<f64>>, k_nn: usize) -> PyResult<f64> {
    sw::realism_score(&matrix(&samples)?, &matrix(&dataset)?, k_nn)
        .map(|r| r.mean)
        .map_err(err)
}

#[pymodule]
fn lomap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchedule>()?;
    m.add_class::<PyMaze>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyIndex>()?;
    m.add_class::<PyBasis>()?;
    m.add_class::<PyPlanner>()?;
    m.add_function(wrap_pyfunction!(gap_scaling, m)?)?;
    m.add_function(wrap_pyfunction!(realism_score, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
