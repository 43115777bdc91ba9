use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{pack_grad, Adam, AdamConfig, GroupRates, ParamVec};
use super::loss::{loss, mse, psnr_from_mse, LossError};
use super::regularizer::shape_regularizer;
use crate::densify::{refine, DensifyConfig, DensifyError, DensifyStats};
use crate::filters::{update_max_sampling_rate, FilterMode, DEFAULT_SMOOTHING_3D_S};
use crate::render::{render, render_backward, Framebuffer, PipelineOptions, RenderConfig, RenderError};
use crate::scene::{CameraView, Gaussian3D};
use crate::spectral::{condition_number_of, entropy_of, serialize_kappa};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("no training views")]
    NoViews,
    #[error("scene is empty")]
    EmptyScene,
    #[error("view {0}: image is {1}x{2}, camera expects {3}x{4}")]
    ImageSize(usize, u32, u32, u32, u32),
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("loss became non-finite at iteration {0}")]
    NumericalFailure(usize),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Densify(#[from] DensifyError),
}

/// Training recipes compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Baseline3dgs,
    Mip,
    Spectral,
    SpectralNoSplit,
    SpectralNoFilter,
    NaiveRegularizer,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Self::Baseline3dgs,
        Self::Mip,
        Self::Spectral,
        Self::SpectralNoSplit,
        Self::SpectralNoFilter,
        Self::NaiveRegularizer,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Baseline3dgs => "baseline-3dgs",
            Self::Mip => "mip",
            Self::Spectral => "spectral",
            Self::SpectralNoSplit => "spectral-no-split",
            Self::SpectralNoFilter => "spectral-no-filter",
            Self::NaiveRegularizer => "naive-regularizer",
        }
    }

    pub fn default_filter(&self) -> FilterMode {
        match self {
            Self::Baseline3dgs | Self::NaiveRegularizer => FilterMode::ewa(),
            Self::Mip | Self::SpectralNoFilter => FilterMode::mip(),
            Self::Spectral | Self::SpectralNoSplit => FilterMode::view_consistent(),
        }
    }

    pub fn uses_3d_smoothing(&self) -> bool {
        matches!(self, Self::Mip)
    }

    pub fn uses_spectral_split(&self) -> bool {
        matches!(self, Self::Spectral | Self::SpectralNoFilter)
    }

    pub fn uses_regularizer(&self) -> bool {
        matches!(self, Self::NaiveRegularizer)
    }

    pub fn names() -> String {
        Self::ALL.map(|v| v.name()).join(", ")
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant `{s}` (expected one of: {})", Self::names()))
    }
}

/// Base learning rates. Position rates are multiplied by the scene extent
/// and decay exponentially from `position` to `position_final`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    pub position: f64,
    pub position_final: f64,
    pub scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1.6e-4,
            position_final: 1.6e-6,
            scale: 5e-3,
            rotation: 1e-3,
            opacity: 5e-2,
            color: 2.5e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda_dssim: f64,
    /// Weight of the shape regularizer; only the naive-regularizer variant uses it.
    pub lambda_shape: f64,
    pub iterations: usize,
    pub refine_every: usize,
    pub refine_start: usize,
    /// Defaults to 80% of `iterations`.
    pub refine_stop: Option<usize>,
    pub lr: LearningRates,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Overrides the variant's screen-space filter.
    pub filter: Option<FilterMode>,
    pub smoothing_3d_s: f64,
    /// World-space scale for position learning rates and τ_radius.
    pub scene_extent: f64,
    #[serde(skip)]
    pub render: RenderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_dssim: 0.2,
            lambda_shape: 0.01,
            iterations: 3000,
            refine_every: 100,
            refine_start: 500,
            refine_stop: None,
            lr: LearningRates::default(),
            adam: AdamConfig::default(),
            seed: 0,
            filter: None,
            smoothing_3d_s: DEFAULT_SMOOTHING_3D_S,
            scene_extent: 1.0,
            render: RenderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return bad("lambda_dssim must lie in [0, 1]");
        }
        if !(self.lambda_shape >= 0.0) {
            return bad("lambda_shape must be >= 0");
        }
        if self.refine_every == 0 {
            return bad("refine_every must be >= 1");
        }
        if !(self.scene_extent > 0.0) {
            return bad("scene_extent must be > 0");
        }
        self.render.validate().map_err(TrainError::Render)
    }

    pub fn refine_stop(&self) -> usize {
        self.refine_stop.unwrap_or(self.iterations * 4 / 5)
    }

    fn position_lr(&self, iteration: usize) -> f64 {
        let r = if self.iterations > 0 {
            (iteration as f64 / self.iterations as f64).min(1.0)
        } else {
            0.0
        };
        let lr = ((1.0 - r) * self.lr.position.ln() + r * self.lr.position_final.ln()).exp();
        lr * self.scene_extent
    }
}

#[derive(Debug, Clone)]
pub struct TrainingView {
    pub camera: CameraView,
    pub image: Framebuffer,
}

/// Scene, optimizer moments and densification statistics, all index-aligned.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub scene: Vec<Gaussian3D>,
    pub adam: Adam,
    /// Sum of NDC-space positional gradient norms since the last refinement.
    pub grad_accum: Vec<f64>,
    pub grad_count: Vec<u32>,
    /// Sum of world-space positional gradients since the last refinement.
    pub world_grad_accum: Vec<Vector3<f64>>,
    pub iteration: usize,
}

impl TrainState {
    pub fn new(scene: Vec<Gaussian3D>, adam: AdamConfig) -> Self {
        let n = scene.len();
        Self {
            adam: Adam::new(n, adam),
            grad_accum: vec![0.0; n],
            grad_count: vec![0; n],
            world_grad_accum: vec![Vector3::zeros(); n],
            scene,
            iteration: 0,
        }
    }

    fn reset_accumulators(&mut self) {
        let n = self.scene.len();
        self.grad_accum = vec![0.0; n];
        self.grad_count = vec![0; n];
        self.world_grad_accum = vec![Vector3::zeros(); n];
    }
}

/// One line of the training log, emitted after every pass over the views.
#[derive(Debug, Clone, Serialize)]
pub struct EpochLog {
    pub iter: usize,
    pub loss: f64,
    pub psnr_mean: f64,
    pub psnr: Vec<f64>,
    pub entropy_mean: f64,
    #[serde(serialize_with = "serialize_kappa")]
    pub kappa_median: f64,
    pub count: usize,
    pub densify: DensifyStats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub iteration: usize,
    pub view: usize,
    pub loss: f64,
    pub psnr: f64,
    pub refined: Option<DensifyStats>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<EpochLog>,
    /// Loss of every iteration.
    pub losses: Vec<f64>,
}

/// Unweighted mean spectral entropy of the scene.
pub fn scene_entropy_metric(scene: &[Gaussian3D]) -> Result<f64, TrainError> {
    if scene.is_empty() {
        return Err(TrainError::EmptyScene);
    }
    let (sum, n) = scene
        .iter()
        .filter_map(|g| entropy_of(&squared_scales(g)).ok())
        .fold((0.0, 0usize), |(s, n), h| (s + h, n + 1));
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Median condition number over the scene (+∞ if empty).
pub fn scene_kappa_median(scene: &[Gaussian3D]) -> f64 {
    let mut ks: Vec<f64> = scene.iter().map(|g| condition_number_of(&squared_scales(g))).collect();
    if ks.is_empty() {
        return f64::INFINITY;
    }
    ks.sort_by(f64::total_cmp);
    let mid = ks.len() / 2;
    if ks.len() % 2 == 1 {
        ks[mid]
    } else {
        0.5 * (ks[mid - 1] + ks[mid])
    }
}

fn squared_scales(g: &Gaussian3D) -> [f64; 3] {
    let s = g.scales();
    [s[0] * s[0], s[1] * s[1], s[2] * s[2]]
}

/// The training loop, one iteration per [`Trainer::step`].
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    views: &'a [TrainingView],
    cameras: Vec<CameraView>,
    pub cfg: TrainConfig,
    pub dcfg: DensifyConfig,
    pub variant: Variant,
    options: PipelineOptions,
    state: TrainState,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    epoch_loss: f64,
    epoch_steps: usize,
    epoch_psnr: Vec<f64>,
    epoch_densify: DensifyStats,
}

impl<'a> Trainer<'a> {
    pub fn new(
        views: &'a [TrainingView],
        init: Vec<Gaussian3D>,
        cfg: TrainConfig,
        dcfg: DensifyConfig,
        variant: Variant,
    ) -> Result<Self, TrainError> {
        if views.is_empty() {
            return Err(TrainError::NoViews);
        }
        cfg.validate()?;
        dcfg.validate()?;
        for (i, v) in views.iter().enumerate() {
            if v.image.width != v.camera.width || v.image.height != v.camera.height {
                return Err(TrainError::ImageSize(
                    i,
                    v.image.width,
                    v.image.height,
                    v.camera.width,
                    v.camera.height,
                ));
            }
        }
        let options = PipelineOptions {
            filter: cfg.filter.unwrap_or_else(|| variant.default_filter()),
            smoothing_3d: variant.uses_3d_smoothing().then_some(cfg.smoothing_3d_s),
        };
        let cameras: Vec<CameraView> = views.iter().map(|v| v.camera.clone()).collect();
        let mut state = TrainState::new(init, cfg.adam);
        refresh_sampling_rates(&mut state.scene, &cameras);
        Ok(Self {
            views,
            cameras,
            cfg,
            dcfg,
            variant,
            options,
            state,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            order: Vec::new(),
            epoch_loss: 0.0,
            epoch_steps: 0,
            epoch_psnr: vec![f64::NAN; views.len()],
            epoch_densify: DensifyStats::default(),
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn options(&self) -> &PipelineOptions {
        &self.options
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    fn next_view(&mut self) -> usize {
        if self.order.is_empty() {
            self.order = (0..self.views.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.order.reverse();
        }
        self.order.pop().expect("refilled above")
    }

    fn is_refinement(&self, it: usize) -> bool {
        it.is_multiple_of(self.cfg.refine_every) && it >= self.cfg.refine_start && it <= self.cfg.refine_stop()
    }

    /// Render, loss, backward, Adam step and, on refinement iterations,
    /// prune / densify / spectral split.
    pub fn step(&mut self) -> Result<StepReport, TrainError> {
        let iteration = self.state.iteration;
        let vi = self.next_view();
        let view = &self.views[vi];
        let rcfg = self.cfg.render;
        let (fb, tape) = render(&self.state.scene, &view.camera, &self.options, &rcfg)?;
        let out = loss(&fb, &view.image, self.cfg.lambda_dssim)?;
        let psnr = psnr_from_mse(mse(&fb, &view.image)?);
        let mut value = out.value;
        let grads = render_backward(&self.state.scene, &tape, &out.grad, &rcfg)?;

        let (w2, h2) = (view.camera.width as f64 / 2.0, view.camera.height as f64 / 2.0);
        for (i, g) in grads.grads.iter().enumerate() {
            if grads.visible[i] {
                self.state.grad_accum[i] += ((g.mean2d[0] * w2).powi(2) + (g.mean2d[1] * h2).powi(2)).sqrt();
                self.state.grad_count[i] += 1;
                self.state.world_grad_accum[i] += g.position;
            }
        }

        let mut flat: Vec<ParamVec> = grads.grads.iter().map(pack_grad).collect();
        if self.variant.uses_regularizer() && self.cfg.lambda_shape > 0.0 {
            let reg = shape_regularizer(&self.state.scene);
            value += self.cfg.lambda_shape * reg.value;
            for (p, g) in flat.iter_mut().zip(&reg.log_scales) {
                for k in 0..3 {
                    p[7 + k] += self.cfg.lambda_shape * g[k];
                }
            }
        }
        if !value.is_finite() {
            return Err(TrainError::NumericalFailure(iteration));
        }

        let lr = &self.cfg.lr;
        let rates = GroupRates {
            position: self.cfg.position_lr(iteration),
            rotation: lr.rotation,
            scale: lr.scale,
            opacity: lr.opacity,
            color: lr.color,
        };
        self.state.adam.apply(&mut self.state.scene, &flat, &rates);
        self.state.iteration += 1;

        let done = self.state.iteration;
        let mut refined = None;
        if self.is_refinement(done) {
            let norms: Vec<f64> = self
                .state
                .grad_accum
                .iter()
                .zip(&self.state.grad_count)
                .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
                .collect();
            let world: Vec<Vector3<f64>> = self
                .state
                .world_grad_accum
                .iter()
                .zip(&self.state.grad_count)
                .map(|(s, &c)| if c > 0 { s / c as f64 } else { *s })
                .collect();
            let outcome = refine(
                &self.state.scene,
                &norms,
                &world,
                &self.dcfg,
                self.variant.uses_spectral_split(),
                &mut self.rng,
            )?;
            self.state.scene = outcome.gaussians;
            self.state.adam.remap(&outcome.origin);
            self.state.reset_accumulators();
            refresh_sampling_rates(&mut self.state.scene, &self.cameras);
            self.epoch_densify.accumulate(&outcome.stats);
            refined = Some(outcome.stats);
        } else if done.is_multiple_of(self.cfg.refine_every) {
            refresh_sampling_rates(&mut self.state.scene, &self.cameras);
        }

        self.epoch_loss += value;
        self.epoch_steps += 1;
        self.epoch_psnr[vi] = psnr;
        Ok(StepReport {
            iteration,
            view: vi,
            loss: value,
            psnr,
            refined,
        })
    }

    fn epoch_log(&mut self) -> EpochLog {
        let seen: Vec<f64> = self.epoch_psnr.iter().cloned().filter(|p| p.is_finite()).collect();
        let log = EpochLog {
            iter: self.state.iteration,
            loss: self.epoch_loss / self.epoch_steps.max(1) as f64,
            psnr_mean: if seen.is_empty() {
                f64::NAN
            } else {
                seen.iter().sum::<f64>() / seen.len() as f64
            },
            psnr: self.epoch_psnr.clone(),
            entropy_mean: scene_entropy_metric(&self.state.scene).unwrap_or(f64::NAN),
            kappa_median: scene_kappa_median(&self.state.scene),
            count: self.state.scene.len(),
            densify: self.epoch_densify,
        };
        self.epoch_loss = 0.0;
        self.epoch_steps = 0;
        self.epoch_psnr.iter_mut().for_each(|p| *p = f64::NAN);
        self.epoch_densify = DensifyStats::default();
        log
    }

    /// Runs the configured number of iterations, handing each epoch log to `sink`.
    pub fn run(mut self, mut sink: impl FnMut(&EpochLog)) -> Result<TrainOutcome, TrainError> {
        let mut log = Vec::new();
        let mut losses = Vec::with_capacity(self.cfg.iterations);
        let epoch_len = self.views.len();
        while self.state.iteration < self.cfg.iterations {
            let r = self.step()?;
            losses.push(r.loss);
            if self.state.iteration.is_multiple_of(epoch_len) || self.state.iteration == self.cfg.iterations {
                let entry = self.epoch_log();
                sink(&entry);
                log.push(entry);
            }
        }
        Ok(TrainOutcome {
            state: self.state,
            log,
            losses,
        })
    }
}

fn refresh_sampling_rates(scene: &mut [Gaussian3D], cameras: &[CameraView]) {
    for g in scene.iter_mut() {
        *g = update_max_sampling_rate(g, cameras);
    }
}

/// Fits `init` to the views with the given variant.
pub fn train(
    views: &[TrainingView],
    init: Vec<Gaussian3D>,
    cfg: TrainConfig,
    dcfg: DensifyConfig,
    variant: Variant,
    sink: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    Trainer::new(views, init, cfg, dcfg, variant)?.run(sink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::splat_and_render;
    use crate::synth::{random_init, synth_scene, SceneKind};

    fn tiny_views(n: usize) -> Vec<TrainingView> {
        let s = synth_scene(SceneKind::TexturedBallAnalog, 60, 1, 32, 32).unwrap();
        s.train_views
            .iter()
            .take(n)
            .map(|c| TrainingView {
                camera: c.clone(),
                image: splat_and_render(&s.gaussians, c, FilterMode::mip(), &RenderConfig::default()).unwrap(),
            })
            .collect()
    }

    fn cfg(iterations: usize) -> TrainConfig {
        TrainConfig {
            iterations,
            refine_every: 10,
            refine_start: 10,
            scene_extent: 4.0,
            ..Default::default()
        }
    }

    #[test]
    fn variant_parsing() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        let err = "fancy".parse::<Variant>().unwrap_err();
        assert!(err.contains("baseline-3dgs") && err.contains("naive-regularizer"));
    }

    #[test]
    fn psnr_and_entropy_metrics() {
        let iso = Gaussian3D::isotropic(Vector3::zeros(), 0.2, 0.5, [0.5; 3]);
        assert!((scene_entropy_metric(std::slice::from_ref(&iso)).unwrap() - 3f64.ln()).abs() < 1e-12);
        let flat = Gaussian3D::new(
            Vector3::zeros(),
            [1.0, 0.0, 0.0, 0.0],
            Vector3::new(1.0, 1e-200, 1e-200),
            0.5,
            [0.5; 3],
        );
        let m = scene_entropy_metric(&[iso, flat]).unwrap();
        assert!((m - 3f64.ln() / 2.0).abs() < 1e-9);
        assert!(matches!(scene_entropy_metric(&[]), Err(TrainError::EmptyScene)));
    }

    #[test]
    fn no_refinement_keeps_count() {
        let views = tiny_views(3);
        let init = random_init(40, 1.3, 2);
        let c = TrainConfig {
            refine_start: 1000,
            ..cfg(12)
        };
        let out = train(
            &views,
            init,
            c,
            DensifyConfig::for_extent(4.0),
            Variant::Spectral,
            |_| {},
        )
        .unwrap();
        assert_eq!(out.state.scene.len(), 40);
        assert_eq!(out.losses.len(), 12);
        assert_eq!(out.log.len(), 4);
        assert_eq!(out.log.last().unwrap().iter, 12);
    }

    #[test]
    fn zero_iterations_return_init() {
        let views = tiny_views(2);
        let init = random_init(10, 1.3, 2);
        let out = train(
            &views,
            init.clone(),
            cfg(0),
            DensifyConfig::default(),
            Variant::Mip,
            |_| {},
        )
        .unwrap();
        assert_eq!(out.state.scene.len(), init.len());
        for (a, b) in out.state.scene.iter().zip(&init) {
            assert_eq!(a.position, b.position);
            assert_eq!(a.log_scales, b.log_scales);
        }
    }

    #[test]
    fn deterministic_single_threaded() {
        let views = tiny_views(3);
        let c = TrainConfig {
            render: RenderConfig::default().sequential(),
            ..cfg(30)
        };
        let a = train(
            &views,
            random_init(30, 1.3, 5),
            c,
            DensifyConfig::for_extent(4.0),
            Variant::Spectral,
            |_| {},
        )
        .unwrap();
        let b = train(
            &views,
            random_init(30, 1.3, 5),
            c,
            DensifyConfig::for_extent(4.0),
            Variant::Spectral,
            |_| {},
        )
        .unwrap();
        assert_eq!(a.state.scene, b.state.scene);
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn optimizer_stays_aligned_through_refinement() {
        let views = tiny_views(4);
        let mut dcfg = DensifyConfig::for_extent(4.0);
        dcfg.tau_loss = 0.0;
        dcfg.tau_spectral = 1.0;
        let mut t = Trainer::new(&views, random_init(20, 1.3, 1), cfg(40), dcfg, Variant::Spectral).unwrap();
        let mut refinements = 0;
        for _ in 0..40 {
            let before = t.state.clone();
            let r = t.step().unwrap();
            let s = &t.state;
            assert_eq!(s.scene.len(), s.adam.len());
            assert_eq!(s.scene.len(), s.grad_accum.len());
            assert_eq!(s.scene.len(), s.world_grad_accum.len());
            if r.refined.is_some() {
                refinements += 1;
                assert!(s.grad_count.iter().all(|&c| c == 0));
                assert!(s.scene.len() != before.scene.len() || r.refined != Some(DensifyStats::default()));
            }
        }
        assert!(refinements >= 3);
    }

    #[test]
    fn regularizer_leaves_accumulators_untouched() {
        let views = tiny_views(3);
        let c = TrainConfig {
            lambda_shape: 0.5,
            ..cfg(20)
        };
        // isotropic Gaussians sit at the regularizer's stationary point, so stretch them
        let mut init = random_init(25, 1.3, 3);
        for g in &mut init {
            g.log_scales.x += 1.0;
        }
        let mut reg = Trainer::new(
            &views,
            init,
            c,
            DensifyConfig::for_extent(4.0),
            Variant::NaiveRegularizer,
        )
        .unwrap();
        for _ in 0..9 {
            let mut plain = reg.clone();
            plain.cfg.lambda_shape = 0.0;
            reg.step().unwrap();
            plain.step().unwrap();
            assert_eq!(reg.state.grad_accum, plain.state.grad_accum);
            assert_eq!(reg.state.grad_count, plain.state.grad_count);
            assert_eq!(reg.state.world_grad_accum, plain.state.world_grad_accum);
            assert_ne!(
                reg.state.scene.iter().map(|g| g.log_scales).collect::<Vec<_>>(),
                plain.state.scene.iter().map(|g| g.log_scales).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn mismatched_image_rejected() {
        let mut views = tiny_views(1);
        views[0].image = Framebuffer::filled(8, 8, [0.0; 3]);
        assert!(matches!(
            Trainer::new(
                &views,
                random_init(5, 1.0, 0),
                cfg(1),
                DensifyConfig::default(),
                Variant::Mip
            ),
            Err(TrainError::ImageSize(..))
        ));
        assert!(matches!(
            Trainer::new(
                &[],
                random_init(5, 1.0, 0),
                cfg(1),
                DensifyConfig::default(),
                Variant::Mip
            ),
            Err(TrainError::NoViews)
        ));
    }
}
