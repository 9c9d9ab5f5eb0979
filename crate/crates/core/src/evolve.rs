//! Simulated large-scale evolution: tournament selection over a population
//! of architectures scored only by the predictor, never by training.
//!
//! Each step draws two distinct individuals, removes the one with the
//! strictly lower predicted accuracy (ties remove the smaller id, so the
//! population maximum can never lose), mutates the survivor, scores the
//! mutant, and inserts it in the loser's slot. Population size is constant
//! throughout and the whole run is a pure function of its seed.

use serde::{Deserialize, Serialize};

use crate::archspace::{
    sample, ArchitectureSpec, LayerKind, LayerSpec, Padding, SampleError, SearchSpaceConfig,
    INPUT_SHAPE, SAMPLE_RETRY_BOUND,
};
use crate::predictor::{predict, PredictError, PredictorModel};
use crate::rng::{derive_seed, SplitMix64};
use crate::shape;

/// Architecture mutations retained for simulation. Training-related
/// mutations (changing the learning rate, resetting weights) are excluded
/// by construction: no network is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    InsertConvolution,
    RemoveLayer,
    AlterStride,
    AlterChannels,
    AlterKernelSize,
    AddSkipConnection,
    RemoveSkipConnection,
    Identity,
}

impl MutationKind {
    pub const ALL: [MutationKind; 8] = [
        MutationKind::InsertConvolution,
        MutationKind::RemoveLayer,
        MutationKind::AlterStride,
        MutationKind::AlterChannels,
        MutationKind::AlterKernelSize,
        MutationKind::AddSkipConnection,
        MutationKind::RemoveSkipConnection,
        MutationKind::Identity,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub steps: usize,
    pub seed: u64,
    /// Relative weight per mutation kind; kinds with weight 0 are never
    /// drawn.
    pub mutation_weights: Vec<(MutationKind, f64)>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population_size: 1000,
            steps: 20_000,
            seed: 0,
            mutation_weights: MutationKind::ALL.iter().map(|&k| (k, 1.0)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub id: u64,
    pub arch: ArchitectureSpec,
    pub predicted_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct Population {
    pub individuals: Vec<Individual>,
    next_id: u64,
}

impl Population {
    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn best(&self) -> &Individual {
        self.individuals
            .iter()
            .max_by(|a, b| {
                a.predicted_accuracy
                    .total_cmp(&b.predicted_accuracy)
                    // Prefer the older individual on ties, matching the
                    // tournament rule.
                    .then(b.id.cmp(&a.id))
            })
            .expect("populations are never empty")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvolveError {
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Predict(#[from] PredictError),
}

/// Outcome of [`run`]: the final population, the best individual, and the
/// best-so-far predicted accuracy after each step.
#[derive(Debug)]
pub struct EvolveOutcome {
    pub population: Population,
    pub best: Individual,
    pub history: Vec<f64>,
}

// Sub-stream keys of the evolution seed.
const STREAM_INIT: u64 = 0;
const STREAM_RUN: u64 = 1;

/// Seeds the population with single-layer architectures, scored by the
/// predictor.
pub fn init_population(
    cfg: &EvolutionConfig,
    space: &SearchSpaceConfig,
    num_classes: u32,
    model: &PredictorModel,
    dcn: f64,
) -> Result<Population, EvolveError> {
    assert!(cfg.population_size >= 2, "population_size must be >= 2");
    let single_layer_space = SearchSpaceConfig {
        max_backbone_layers: 1,
        ..space.clone()
    };
    let init_stream = derive_seed(cfg.seed, STREAM_INIT);
    let mut individuals = Vec::with_capacity(cfg.population_size);
    for i in 0..cfg.population_size {
        let arch = sample(&single_layer_space, num_classes, derive_seed(init_stream, i as u64))?;
        let predicted_accuracy = predict(&arch, dcn, num_classes, model)?;
        individuals.push(Individual {
            id: i as u64,
            arch,
            predicted_accuracy,
        });
    }
    Ok(Population {
        individuals,
        next_id: cfg.population_size as u64,
    })
}

/// Applies one mutation, drawing any fresh hyperparameters from the
/// search space's legal sets. Total: whenever the drawn change is
/// inapplicable or would produce an invalid architecture, the input is
/// returned unchanged (the identity fallback).
pub fn mutate(
    arch: &ArchitectureSpec,
    kind: MutationKind,
    rng: &mut SplitMix64,
    space: &SearchSpaceConfig,
) -> ArchitectureSpec {
    let mutated = match kind {
        MutationKind::Identity => Some(arch.clone()),
        MutationKind::InsertConvolution => insert_convolution(arch, rng, space),
        MutationKind::RemoveLayer => remove_layer(arch, rng),
        MutationKind::AlterStride => alter_hyperparameter(arch, rng, space, Alter::Stride),
        MutationKind::AlterChannels => alter_hyperparameter(arch, rng, space, Alter::Channels),
        MutationKind::AlterKernelSize => alter_hyperparameter(arch, rng, space, Alter::Kernel),
        MutationKind::AddSkipConnection => add_skip(arch, rng, space),
        MutationKind::RemoveSkipConnection => remove_skip(arch, rng),
    };
    match mutated {
        Some(candidate)
            if crate::archspace::validate(&candidate, INPUT_SHAPE).is_ok() =>
        {
            candidate
        }
        _ => arch.clone(),
    }
}

fn insert_convolution(
    arch: &ArchitectureSpec,
    rng: &mut SplitMix64,
    space: &SearchSpaceConfig,
) -> Option<ArchitectureSpec> {
    if arch.layers.len() >= space.max_backbone_layers as usize {
        return None;
    }
    for _ in 0..SAMPLE_RETRY_BOUND {
        let position = rng.next_below(arch.layers.len() as u64 + 1) as usize;
        let (lo, hi) = space.channel_range;
        let layer = LayerSpec::Convolution {
            kernel_size: *rng.choose(&space.kernel_sizes),
            stride: 1 + rng.next_below(2) as u32,
            padding: if rng.next_below(2) == 0 { Padding::Same } else { Padding::Valid },
            out_channels: lo + rng.next_below((hi - lo + 1) as u64) as u32,
            batch_norm: rng.next_below(2) == 1,
        };
        let mut layers = arch.layers.clone();
        shift_skip_sources_for_insert(&mut layers, position);
        layers.insert(position, layer);
        let candidate = ArchitectureSpec::new(layers);
        if crate::archspace::validate(&candidate, INPUT_SHAPE).is_ok() {
            return Some(candidate);
        }
    }
    None
}

/// Bumps skip sources in layers at or after `position` so they keep
/// pointing at the same layers once something is inserted at `position`.
fn shift_skip_sources_for_insert(layers: &mut [LayerSpec], position: usize) {
    for layer in layers.iter_mut().skip(position) {
        if let LayerSpec::SkipConnection { source_index } = layer {
            if *source_index >= position {
                *source_index += 1;
            }
        }
    }
}

fn remove_layer(arch: &ArchitectureSpec, rng: &mut SplitMix64) -> Option<ArchitectureSpec> {
    if arch.layers.len() <= 1 {
        return None;
    }
    let target = rng.next_below(arch.layers.len() as u64) as usize;
    remove_with_dependents(&arch.layers, target).map(ArchitectureSpec::new)
}

/// Removes layer `target` plus every skip connection that (transitively)
/// references a removed layer, remapping the surviving skip sources.
fn remove_with_dependents(layers: &[LayerSpec], target: usize) -> Option<Vec<LayerSpec>> {
    let mut removed = vec![false; layers.len()];
    removed[target] = true;
    loop {
        let mut changed = false;
        for (index, layer) in layers.iter().enumerate() {
            if removed[index] {
                continue;
            }
            if let LayerSpec::SkipConnection { source_index } = layer {
                if removed[*source_index] {
                    removed[index] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut new_index = vec![0usize; layers.len()];
    let mut next = 0;
    for i in 0..layers.len() {
        new_index[i] = next;
        if !removed[i] {
            next += 1;
        }
    }
    if next == 0 {
        return None;
    }
    let mut out = Vec::with_capacity(next);
    for (i, layer) in layers.iter().enumerate() {
        if removed[i] {
            continue;
        }
        let mut layer = layer.clone();
        if let LayerSpec::SkipConnection { source_index } = &mut layer {
            *source_index = new_index[*source_index];
        }
        out.push(layer);
    }
    Some(out)
}

enum Alter {
    Stride,
    Channels,
    Kernel,
}

fn alter_hyperparameter(
    arch: &ArchitectureSpec,
    rng: &mut SplitMix64,
    space: &SearchSpaceConfig,
    what: Alter,
) -> Option<ArchitectureSpec> {
    let applicable: Vec<usize> = arch
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| match what {
            Alter::Stride | Alter::Kernel => matches!(
                l.kind(),
                LayerKind::Convolution | LayerKind::Pooling | LayerKind::ResidualBlock
            ),
            Alter::Channels => {
                matches!(l.kind(), LayerKind::Convolution | LayerKind::ResidualBlock)
            }
        })
        .map(|(i, _)| i)
        .collect();
    if applicable.is_empty() {
        return None;
    }
    let index = *rng.choose(&applicable);
    let mut layers = arch.layers.clone();
    let (lo, hi) = space.channel_range;
    match (&mut layers[index], what) {
        (LayerSpec::Convolution { stride, .. }, Alter::Stride)
        | (LayerSpec::Pooling { stride, .. }, Alter::Stride)
        | (LayerSpec::ResidualBlock { stride, .. }, Alter::Stride) => {
            *stride = 1 + rng.next_below(2) as u32;
        }
        (LayerSpec::Convolution { out_channels, .. }, Alter::Channels)
        | (LayerSpec::ResidualBlock { out_channels, .. }, Alter::Channels) => {
            *out_channels = lo + rng.next_below((hi - lo + 1) as u64) as u32;
        }
        (LayerSpec::Convolution { kernel_size, .. }, Alter::Kernel)
        | (LayerSpec::Pooling { kernel_size, .. }, Alter::Kernel)
        | (LayerSpec::ResidualBlock { kernel_size, .. }, Alter::Kernel) => {
            *kernel_size = *rng.choose(&space.kernel_sizes);
        }
        _ => unreachable!("applicability was checked above"),
    }
    Some(ArchitectureSpec::new(layers))
}

fn add_skip(
    arch: &ArchitectureSpec,
    rng: &mut SplitMix64,
    space: &SearchSpaceConfig,
) -> Option<ArchitectureSpec> {
    if arch.layers.len() >= space.max_backbone_layers as usize {
        return None;
    }
    let shapes = shape::backbone_shapes(arch, INPUT_SHAPE).ok()?;
    let position = rng.next_below(arch.layers.len() as u64 + 1) as usize;
    let input_at_position = if position == 0 {
        INPUT_SHAPE
    } else {
        shapes[position - 1].1
    };
    let sources: Vec<usize> = (0..position)
        .filter(|&j| shapes[j].1 == input_at_position)
        .collect();
    if sources.is_empty() {
        return None;
    }
    let source_index = *rng.choose(&sources);
    let mut layers = arch.layers.clone();
    shift_skip_sources_for_insert(&mut layers, position);
    layers.insert(position, LayerSpec::SkipConnection { source_index });
    Some(ArchitectureSpec::new(layers))
}

fn remove_skip(arch: &ArchitectureSpec, rng: &mut SplitMix64) -> Option<ArchitectureSpec> {
    let skips: Vec<usize> = arch
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, LayerSpec::SkipConnection { .. }))
        .map(|(i, _)| i)
        .collect();
    if skips.is_empty() {
        return None;
    }
    let target = *rng.choose(&skips);
    remove_with_dependents(&arch.layers, target).map(ArchitectureSpec::new)
}

fn weighted_kind(rng: &mut SplitMix64, weights: &[(MutationKind, f64)]) -> MutationKind {
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    assert!(
        total > 0.0 && weights.iter().all(|(_, w)| *w >= 0.0),
        "mutation weights must be non-negative with a positive sum"
    );
    let mut r = rng.next_f64() * total;
    for (kind, w) in weights {
        if r < *w {
            return *kind;
        }
        r -= w;
    }
    weights.last().expect("weights are non-empty").0
}

/// Runs the full tournament loop. See the module docs for the step rule.
pub fn run(
    cfg: &EvolutionConfig,
    space: &SearchSpaceConfig,
    num_classes: u32,
    model: &PredictorModel,
    dcn: f64,
) -> Result<EvolveOutcome, EvolveError> {
    let mut population = init_population(cfg, space, num_classes, model, dcn)?;
    let mut rng = SplitMix64::derived(cfg.seed, STREAM_RUN);
    let mut best = population.best().clone();
    let mut history = Vec::with_capacity(cfg.steps);

    for _ in 0..cfg.steps {
        let n = population.len() as u64;
        let a = rng.next_below(n) as usize;
        let mut b = rng.next_below(n - 1) as usize;
        if b >= a {
            b += 1;
        }
        let (first, second) = (&population.individuals[a], &population.individuals[b]);
        let loser_slot = match first.predicted_accuracy.total_cmp(&second.predicted_accuracy) {
            std::cmp::Ordering::Less => a,
            std::cmp::Ordering::Greater => b,
            std::cmp::Ordering::Equal => {
                if first.id < second.id {
                    a
                } else {
                    b
                }
            }
        };
        let winner_slot = if loser_slot == a { b } else { a };

        let kind = weighted_kind(&mut rng, &cfg.mutation_weights);
        let mutant_arch = mutate(&population.individuals[winner_slot].arch, kind, &mut rng, space);
        let predicted_accuracy = predict(&mutant_arch, dcn, num_classes, model)?;
        let mutant = Individual {
            id: population.next_id,
            arch: mutant_arch,
            predicted_accuracy,
        };
        population.next_id += 1;
        if predicted_accuracy > best.predicted_accuracy {
            best = mutant.clone();
        }
        population.individuals[loser_slot] = mutant;
        history.push(best.predicted_accuracy);
    }

    Ok(EvolveOutcome {
        population,
        best,
        history,
    })
}
