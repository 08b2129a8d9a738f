use std::cmp::Ordering;
use std::collections::HashSet;

use rand::Rng;
use thiserror::Error;

use super::{mutate_filtered, EaConfig};
use crate::molgraph::{CanonicalKey, Molecule};

/// Why a fitness call did not produce a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitnessError {
    /// This candidate cannot be scored; it is dropped.
    Rejected,
    /// Stop the search now (e.g. the evaluation budget is spent).
    Halt,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EaError {
    #[error("initial population is empty")]
    EmptyPopulation,
    #[error("no initial individual could be scored")]
    NoViableIndividual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub molecule: Molecule,
    pub fitness: f64,
}

#[derive(Debug, Clone)]
pub struct EaOutcome {
    pub best: Molecule,
    pub best_fitness: f64,
    /// Every generated child in evaluation order; initial members excluded.
    pub trace: Vec<Evaluated>,
    pub inserted: usize,
    pub steps_run: usize,
    pub halted: bool,
}

struct Member {
    molecule: Molecule,
    fitness: f64,
    seq: u64,
}

/// Best first; ties go to the older member.
fn rank(a: &Member, b: &Member) -> Ordering {
    b.fitness
        .partial_cmp(&a.fitness)
        .unwrap_or(Ordering::Equal)
        .then(a.seq.cmp(&b.seq))
}

/// Steady-state elitist maximization of `fitness`.
///
/// Each step walks the population best-first (cyclically), mutating one
/// parent at a time, until `insert_per_step` children have been scored or
/// every member has failed to produce a child. A child joins the population
/// when there is room or when it beats the current worst member; the worst
/// members are evicted to keep the size at `max_population`. Mutations avoid
/// `tabu` and anything already seen during this run.
pub fn ea_maximize<F, R>(
    mut fitness: F,
    initial: &[Molecule],
    cfg: &EaConfig,
    tabu: &HashSet<CanonicalKey>,
    rng: &mut R,
) -> Result<EaOutcome, EaError>
where
    F: FnMut(&Molecule) -> Result<f64, FitnessError>,
    R: Rng + ?Sized,
{
    ea_maximize_stepwise(|m, _| fitness(m), initial, cfg, tabu, rng)
}

/// As [`ea_maximize`], but `fitness` also receives the step number
/// (0 while scoring the initial population).
///
/// A step in which no parent yields a child ends the search.
pub fn ea_maximize_stepwise<F, R>(
    mut fitness: F,
    initial: &[Molecule],
    cfg: &EaConfig,
    tabu: &HashSet<CanonicalKey>,
    rng: &mut R,
) -> Result<EaOutcome, EaError>
where
    F: FnMut(&Molecule, usize) -> Result<f64, FitnessError>,
    R: Rng + ?Sized,
{
    if initial.is_empty() {
        return Err(EaError::EmptyPopulation);
    }
    let mut seq = 0u64;
    let mut seen: HashSet<CanonicalKey> = HashSet::new();
    let mut population: Vec<Member> = Vec::new();
    let mut halted = false;
    for molecule in initial {
        if !seen.insert(molecule.key.clone()) {
            continue;
        }
        match fitness(molecule, 0) {
            Ok(f) => {
                population.push(Member {
                    molecule: molecule.clone(),
                    fitness: f,
                    seq,
                });
                seq += 1;
            }
            Err(FitnessError::Rejected) => {}
            Err(FitnessError::Halt) => {
                halted = true;
                break;
            }
        }
    }
    if population.is_empty() {
        return Err(EaError::NoViableIndividual);
    }
    population.sort_by(rank);
    population.truncate(cfg.max_population);

    let mut trace = Vec::new();
    let mut inserted = 0;
    let mut steps_run = 0;

    while !halted && steps_run < cfg.steps {
        steps_run += 1;
        let mut children: Vec<Member> = Vec::new();
        let mut failed = vec![false; population.len()];
        let mut failures = 0;
        let mut cursor = 0;
        while children.len() < cfg.insert_per_step && failures < population.len() && !halted {
            let index = cursor % population.len();
            cursor += 1;
            if failed[index] {
                continue;
            }
            let parent = &population[index].molecule;
            let child = mutate_filtered(
                &parent.graph,
                &parent.key,
                cfg,
                |k| tabu.contains(k) || seen.contains(k),
                rng,
            );
            let Ok(child) = child else {
                failed[index] = true;
                failures += 1;
                continue;
            };
            seen.insert(child.key.clone());
            match fitness(&child, steps_run) {
                Ok(f) => {
                    trace.push(Evaluated {
                        molecule: child.clone(),
                        fitness: f,
                    });
                    children.push(Member {
                        molecule: child,
                        fitness: f,
                        seq,
                    });
                    seq += 1;
                }
                Err(FitnessError::Rejected) => {
                    failed[index] = true;
                    failures += 1;
                }
                Err(FitnessError::Halt) => halted = true,
            }
        }

        if children.is_empty() && !halted {
            break;
        }
        for child in children {
            let worst = population.last().map(|m| m.fitness);
            let room = population.len() < cfg.max_population;
            if room || worst.is_some_and(|w| child.fitness > w) {
                let at = population
                    .binary_search_by(|m| rank(m, &child))
                    .unwrap_or_else(|i| i);
                population.insert(at, child);
                inserted += 1;
                population.truncate(cfg.max_population);
            }
        }
    }

    let best = &population[0];
    Ok(EaOutcome {
        best: best.molecule.clone(),
        best_fitness: best.fitness,
        trace,
        inserted,
        steps_run,
        halted,
    })
}
