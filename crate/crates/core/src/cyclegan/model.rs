use std::path::Path;

use ctaug_autograd::{Adam, Archive, Builder, Ctx, Graph, ParamStore, Scalar, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{adversarial_loss, cycle_loss, identity_loss, CycleGanLossWeights};
use super::networks::{Discriminator, DiscriminatorSpec, Generator, GeneratorSpec};
use super::{CycleGanError, ReplayBuffer};

pub const CHECKPOINT_HEADER: &str = "CYGAN-CKPT-v1";

/// Translation direction. Domain A is `normal`, domain B is `covid`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AToB,
    BToA,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::AToB => "a_to_b",
            Direction::BToA => "b_to_a",
        }
    }
}

/// Two generators, two discriminators and their replay buffers.
///
/// Generator parameters live in `generators` under `g_ab.` / `g_ba.`;
/// discriminator parameters in `discriminators` under `d_a.` / `d_b.`.
#[derive(Clone, Debug)]
pub struct CycleGanModel<T: Scalar> {
    pub gen_spec: GeneratorSpec,
    pub disc_spec: DiscriminatorSpec,
    pub g_ab: Generator,
    pub g_ba: Generator,
    pub d_a: Discriminator,
    pub d_b: Discriminator,
    pub generators: ParamStore<T>,
    pub discriminators: ParamStore<T>,
    pub buffer_a: ReplayBuffer<T>,
    pub buffer_b: ReplayBuffer<T>,
    pub step: u64,
}

/// Per-term losses of one training step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub step: u64,
    pub adv_ab: f64,
    pub adv_ba: f64,
    pub cycle_a: f64,
    pub cycle_b: f64,
    pub identity_a: f64,
    pub identity_b: f64,
    pub generator: f64,
    pub disc_a: f64,
    pub disc_b: f64,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str =
        "step,adv_ab,adv_ba,cycle_a,cycle_b,identity_a,identity_b,generator,disc_a,disc_b";

    pub fn cycle(&self) -> f64 {
        self.cycle_a + self.cycle_b
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.adv_ab,
            self.adv_ba,
            self.cycle_a,
            self.cycle_b,
            self.identity_a,
            self.identity_b,
            self.generator,
            self.disc_a,
            self.disc_b
        )
    }
}

/// Generator objective terms as graph nodes.
pub struct GeneratorTerms<'g, T> {
    pub total: Var<'g, T>,
    pub fake_a: Var<'g, T>,
    pub fake_b: Var<'g, T>,
    pub named: Vec<(&'static str, Var<'g, T>)>,
}

/// Adam pair with the usual GAN momentum `(0.5, 0.999)`.
#[derive(Clone, Debug)]
pub struct CycleGanOptim<T> {
    pub generators: Adam<T>,
    pub discriminators: Adam<T>,
}

impl<T: Scalar> Default for CycleGanOptim<T> {
    fn default() -> Self {
        Self {
            generators: Adam::new(0.5, 0.999),
            discriminators: Adam::new(0.5, 0.999),
        }
    }
}

/// Constant rate for `decay_start` steps, then linear decay reaching zero at
/// `total_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearDecay {
    pub base_lr: f64,
    pub total_steps: u64,
    pub decay_start: u64,
}

impl LinearDecay {
    /// Decay over the second half of `total_steps`.
    pub fn halfway(base_lr: f64, total_steps: u64) -> Self {
        Self {
            base_lr,
            total_steps,
            decay_start: total_steps / 2,
        }
    }

    pub fn rate(&self, step: u64) -> f64 {
        if step < self.decay_start || self.total_steps <= self.decay_start {
            return self.base_lr;
        }
        let span = (self.total_steps - self.decay_start) as f64;
        let left = self.total_steps.saturating_sub(step) as f64;
        self.base_lr * (left / span).clamp(0.0, 1.0)
    }
}

fn check_finite(name: &str, v: f64, step: u64) -> Result<f64, CycleGanError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CycleGanError::NonFiniteLoss {
            term: name.to_string(),
            step,
        })
    }
}

impl<T: Scalar> CycleGanModel<T> {
    pub fn new(
        gen_spec: GeneratorSpec,
        disc_spec: DiscriminatorSpec,
        buffer_capacity: usize,
        seed: u64,
    ) -> Result<Self, CycleGanError> {
        gen_spec.validate()?;
        disc_spec.validate()?;
        if gen_spec.input_dim != disc_spec.input_dim || gen_spec.channels != disc_spec.channels {
            return Err(CycleGanError::Spec(
                "generator and discriminator must agree on input_dim and channels".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut generators = ParamStore::new();
        let mut discriminators = ParamStore::new();
        let (g_ab, g_ba) = {
            let mut b = Builder::new(&mut generators, &mut rng);
            let g_ab = b.scoped("g_ab", |b| Generator::new(b, &gen_spec));
            let g_ba = b.scoped("g_ba", |b| Generator::new(b, &gen_spec));
            (g_ab, g_ba)
        };
        let (d_a, d_b) = {
            let mut b = Builder::new(&mut discriminators, &mut rng);
            let d_a = b.scoped("d_a", |b| Discriminator::new(b, &disc_spec));
            let d_b = b.scoped("d_b", |b| Discriminator::new(b, &disc_spec));
            (d_a, d_b)
        };
        Ok(Self {
            gen_spec,
            disc_spec,
            g_ab,
            g_ba,
            d_a,
            d_b,
            generators,
            discriminators,
            buffer_a: ReplayBuffer::new(buffer_capacity),
            buffer_b: ReplayBuffer::new(buffer_capacity),
            step: 0,
        })
    }

    /// Checks an `[n, channels, input_dim, input_dim]` batch.
    pub fn check_batch(&self, t: &Tensor<T>) -> Result<(), CycleGanError> {
        let d = self.gen_spec.input_dim;
        let want = [self.gen_spec.channels, d, d];
        if t.ndim() != 4 || t.shape()[1..] != want || t.shape()[0] == 0 {
            return Err(CycleGanError::Shape(format!(
                "expected [n, {}, {d}, {d}], got {:?}",
                want[0],
                t.shape()
            )));
        }
        Ok(())
    }

    /// Builds the generator objective on `graph`,
    /// `adv_ab + adv_ba + lambda_cycle (cycle_a + cycle_b) + lambda_identity (identity_a + identity_b)`.
    ///
    /// Identity terms are omitted from the graph when their weight is zero.
    pub fn generator_objective<'g>(
        &self,
        graph: &'g Graph<T>,
        a: Var<'g, T>,
        b: Var<'g, T>,
        weights: &CycleGanLossWeights,
    ) -> Result<GeneratorTerms<'g, T>, CycleGanError> {
        let g = Ctx::new(graph, &self.generators);
        let d = Ctx::new(graph, &self.discriminators);
        let fake_b = self.g_ab.forward(&g, a);
        let fake_a = self.g_ba.forward(&g, b);
        let adv_ab = adversarial_loss(self.d_b.forward(&d, fake_b), true);
        let adv_ba = adversarial_loss(self.d_a.forward(&d, fake_a), true);
        let cycle_a = cycle_loss(a, self.g_ba.forward(&g, fake_b))?;
        let cycle_b = cycle_loss(b, self.g_ab.forward(&g, fake_a))?;
        let mut named = vec![("adv_ab", adv_ab), ("adv_ba", adv_ba), ("cycle_a", cycle_a), ("cycle_b", cycle_b)];
        let mut total = adv_ab
            .add(adv_ba)
            .add(cycle_a.add(cycle_b).scale(T::lit(weights.lambda_cycle)));
        if weights.lambda_identity > 0.0 {
            let identity_a = identity_loss(a, self.g_ba.forward(&g, a))?;
            let identity_b = identity_loss(b, self.g_ab.forward(&g, b))?;
            named.push(("identity_a", identity_a));
            named.push(("identity_b", identity_b));
            total = total.add(identity_a.add(identity_b).scale(T::lit(weights.lambda_identity)));
        }
        Ok(GeneratorTerms {
            total,
            fake_a,
            fake_b,
            named,
        })
    }

    /// One generator update followed by one update of both discriminators
    /// against replay-buffer fakes. `lr` applies to all four networks.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        optim: &mut CycleGanOptim<T>,
        batch_a: &Tensor<T>,
        batch_b: &Tensor<T>,
        weights: &CycleGanLossWeights,
        lr: f64,
        rng: &mut R,
    ) -> Result<LossBreakdown, CycleGanError> {
        weights.validate()?;
        self.check_batch(batch_a)?;
        self.check_batch(batch_b)?;
        let step = self.step + 1;
        let mut out = LossBreakdown {
            step,
            ..Default::default()
        };
        let rate = T::lit(lr);

        let (fake_a, fake_b) = {
            let graph = Graph::new();
            graph.track(&self.generators);
            let a = graph.input(batch_a.clone());
            let b = graph.input(batch_b.clone());
            let terms = self.generator_objective(&graph, a, b, weights)?;
            for (name, v) in &terms.named {
                let value = check_finite(name, v.item().to_f64().unwrap_or(f64::NAN), step)?;
                match *name {
                    "adv_ab" => out.adv_ab = value,
                    "adv_ba" => out.adv_ba = value,
                    "cycle_a" => out.cycle_a = value,
                    "cycle_b" => out.cycle_b = value,
                    "identity_a" => out.identity_a = value,
                    _ => out.identity_b = value,
                }
            }
            out.generator = check_finite("generator", terms.total.item().to_f64().unwrap_or(f64::NAN), step)?;
            let grads = graph.backward(terms.total);
            if !grads.all_finite() {
                return Err(CycleGanError::NonFiniteLoss {
                    term: "generator gradient".into(),
                    step,
                });
            }
            optim.generators.step(&mut self.generators, &grads, |_| rate);
            ((*terms.fake_a.value()).clone(), (*terms.fake_b.value()).clone())
        };

        let pool_a = self.buffer_a.query(&fake_a, rng);
        let pool_b = self.buffer_b.query(&fake_b, rng);
        let graph = Graph::new();
        graph.track(&self.discriminators);
        let d = Ctx::new(&graph, &self.discriminators);
        let half = T::lit(0.5);
        let disc_a = adversarial_loss(self.d_a.forward(&d, graph.input(batch_a.clone())), true)
            .add(adversarial_loss(self.d_a.forward(&d, graph.input(pool_a)), false))
            .scale(half);
        let disc_b = adversarial_loss(self.d_b.forward(&d, graph.input(batch_b.clone())), true)
            .add(adversarial_loss(self.d_b.forward(&d, graph.input(pool_b)), false))
            .scale(half);
        out.disc_a = check_finite("disc_a", disc_a.item().to_f64().unwrap_or(f64::NAN), step)?;
        out.disc_b = check_finite("disc_b", disc_b.item().to_f64().unwrap_or(f64::NAN), step)?;
        let grads = graph.backward(disc_a.add(disc_b));
        optim.discriminators.step(&mut self.discriminators, &grads, |_| rate);
        self.step = step;
        Ok(out)
    }

    /// Applies one generator in inference mode.
    pub fn translate(&self, imgs: &Tensor<T>, direction: Direction) -> Result<Tensor<T>, CycleGanError> {
        self.check_batch(imgs)?;
        let graph = Graph::new();
        let cx = Ctx::new(&graph, &self.generators);
        let gen = match direction {
            Direction::AToB => &self.g_ab,
            Direction::BToA => &self.g_ba,
        };
        let y = gen.forward(&cx, graph.input(imgs.clone())).value();
        Ok((*y).clone())
    }

    /// Writes every network, the step counter and both optimizers' moments.
    /// `extra` is stored verbatim in the metadata.
    pub fn save_checkpoint(
        &self,
        optim: &CycleGanOptim<T>,
        path: &Path,
        extra: serde_json::Value,
    ) -> Result<(), CycleGanError> {
        let mut ar = Archive::new(CHECKPOINT_HEADER);
        ar.put_store("gen", &self.generators);
        ar.put_store("disc", &self.discriminators);
        let opt_g = optim.generators.save(&self.generators, "opt_gen", &mut ar);
        let opt_d = optim.discriminators.save(&self.discriminators, "opt_disc", &mut ar);
        ar.meta = serde_json::json!({
            "gen_spec": self.gen_spec,
            "disc_spec": self.disc_spec,
            "buffer_capacity": self.buffer_a.capacity(),
            "step": self.step,
            "opt_gen": opt_g,
            "opt_disc": opt_d,
            "extra": extra,
        });
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CycleGanError::Io(format!("{}: {e}", dir.display())))?;
        }
        ar.save(path).map_err(|e| CycleGanError::Checkpoint(format!("{}: {e}", path.display())))
    }

    /// Restores a model, its optimizers and the `extra` metadata. Replay
    /// buffers start empty.
    pub fn load_checkpoint(path: &Path) -> Result<(Self, CycleGanOptim<T>, serde_json::Value), CycleGanError> {
        let ctx = |e: ctaug_autograd::Error| CycleGanError::Checkpoint(format!("{}: {e}", path.display()));
        let ar = Archive::load(path, CHECKPOINT_HEADER).map_err(ctx)?;
        let meta = &ar.meta;
        let field = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| CycleGanError::Checkpoint(format!("{}: metadata lacks `{k}`", path.display())))
        };
        let gen_spec: GeneratorSpec = serde_json::from_value(field("gen_spec")?)
            .map_err(|e| CycleGanError::Checkpoint(e.to_string()))?;
        let disc_spec: DiscriminatorSpec = serde_json::from_value(field("disc_spec")?)
            .map_err(|e| CycleGanError::Checkpoint(e.to_string()))?;
        let capacity = field("buffer_capacity")?.as_u64().unwrap_or(50) as usize;
        let mut model = Self::new(gen_spec, disc_spec, capacity, 0)?;
        ar.load_store("gen", &mut model.generators).map_err(ctx)?;
        ar.load_store("disc", &mut model.discriminators).map_err(ctx)?;
        model.step = field("step")?.as_u64().unwrap_or(0);
        let optim = CycleGanOptim {
            generators: Adam::load(&model.generators, "opt_gen", &ar, &field("opt_gen")?).map_err(ctx)?,
            discriminators: Adam::load(&model.discriminators, "opt_disc", &ar, &field("opt_disc")?).map_err(ctx)?,
        };
        let extra = meta.get("extra").cloned().unwrap_or(serde_json::Value::Null);
        Ok((model, optim, extra))
    }
}
