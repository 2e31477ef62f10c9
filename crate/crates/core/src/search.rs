//! Constrained global search over per-block sorted score lists.

use crate::error::{Error, Result};
use crate::rate::LocalScoreList;
use crate::space::{Architecture, BlockArch, Constraint, Cost, CostLut};

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub arch: Architecture,
    /// Σ_k λ_k · score_k, summed in block order.
    pub score: f64,
    pub cost: Cost,
    /// Complete architectures whose total score was evaluated.
    pub visits: u64,
    /// List entries examined across all blocks.
    pub nodes: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraverseOptions {
    /// Stop scanning the last block at its first feasible entry.
    pub early_return: bool,
}

impl Default for TraverseOptions {
    fn default() -> Self {
        TraverseOptions { early_return: true }
    }
}

struct Prepared<'a> {
    lists: &'a [LocalScoreList],
    costs: Vec<Vec<Cost>>,
    weights: Vec<f64>,
    /// Componentwise minimal cost of blocks `k+1..`.
    min_rest: Vec<Cost>,
    min_total: Cost,
}

fn prepare<'a>(
    lists: &'a [LocalScoreList],
    lut: &CostLut,
    weights: &[f64],
) -> Result<Prepared<'a>> {
    if lists.is_empty() {
        return Err(Error::Precondition("no score lists".into()));
    }
    if lists.len() != lut.num_blocks() {
        return Err(Error::Precondition(format!(
            "{} score lists for a {}-block cost table",
            lists.len(),
            lut.num_blocks()
        )));
    }
    let weights = if weights.is_empty() {
        vec![1.0; lists.len()]
    } else {
        weights.to_vec()
    };
    if weights.len() != lists.len() || weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Precondition(
            "block weights must be positive, one per block".into(),
        ));
    }
    let mut costs = Vec::with_capacity(lists.len());
    for (k, list) in lists.iter().enumerate() {
        if list.is_empty() {
            return Err(Error::Precondition(format!(
                "score list of block {k} is empty"
            )));
        }
        if !list.is_sorted() {
            return Err(Error::Precondition(format!(
                "score list of block {k} is not sorted"
            )));
        }
        costs.push(
            list.entries
                .iter()
                .map(|e| lut.block_cost(k, &e.arch))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let mins: Vec<Cost> = costs
        .iter()
        .map(|c| Cost {
            params: c.iter().map(|x| x.params).min().unwrap_or(0),
            macs: c.iter().map(|x| x.macs).min().unwrap_or(0),
        })
        .collect();
    let mut min_rest = vec![Cost::default(); lists.len()];
    for k in (0..lists.len().saturating_sub(1)).rev() {
        min_rest[k] = min_rest[k + 1] + mins[k + 1];
    }
    let min_total = mins.iter().copied().sum();
    Ok(Prepared {
        lists,
        costs,
        weights,
        min_rest,
        min_total,
    })
}

struct Best {
    score: f64,
    key: Vec<BlockArch>,
    cost: Cost,
}

fn offer(best: &mut Option<Best>, score: f64, cost: Cost, key: impl FnOnce() -> Vec<BlockArch>) {
    let better = match best {
        None => true,
        Some(b) if score < b.score => true,
        Some(b) if score == b.score => {
            let k = key();
            if k < b.key {
                *best = Some(Best {
                    score,
                    key: k,
                    cost,
                });
            }
            return;
        }
        _ => false,
    };
    if better {
        *best = Some(Best {
            score,
            key: key(),
            cost,
        });
    }
}

fn finish(p: &Prepared<'_>, best: Option<Best>, visits: u64, nodes: u64) -> Result<SearchOutcome> {
    let b = best.ok_or(Error::Infeasible {
        min_params: p.min_total.params,
        min_macs: p.min_total.macs,
    })?;
    Ok(SearchOutcome {
        arch: Architecture { blocks: b.key },
        score: b.score,
        cost: b.cost,
        visits,
        nodes,
    })
}

/// Depth-first traversal of the sorted lists. A prefix is skipped as soon
/// as its cost plus the cheapest completion violates the constraint; in the
/// last block the first feasible entry is optimal for its prefix.
pub fn traverse_search(
    lists: &[LocalScoreList],
    lut: &CostLut,
    constraint: &Constraint,
    weights: &[f64],
) -> Result<SearchOutcome> {
    traverse_search_with(lists, lut, constraint, weights, TraverseOptions::default())
}

pub fn traverse_search_with(
    lists: &[LocalScoreList],
    lut: &CostLut,
    constraint: &Constraint,
    weights: &[f64],
    options: TraverseOptions,
) -> Result<SearchOutcome> {
    let p = prepare(lists, lut, weights)?;
    let mut state = Traversal {
        p: &p,
        constraint,
        options,
        chosen: Vec::with_capacity(lists.len()),
        best: None,
        visits: 0,
        nodes: 0,
    };
    if constraint.admits(p.min_total) {
        state.visit(0, Cost::default(), 0.0);
    }
    let (best, visits, nodes) = (state.best, state.visits, state.nodes);
    finish(&p, best, visits, nodes)
}

struct Traversal<'p, 'a> {
    p: &'p Prepared<'a>,
    constraint: &'p Constraint,
    options: TraverseOptions,
    chosen: Vec<usize>,
    best: Option<Best>,
    visits: u64,
    nodes: u64,
}

impl Traversal<'_, '_> {
    fn visit(&mut self, k: usize, cost_prev: Cost, score_prev: f64) {
        let p = self.p;
        let last = k + 1 == p.lists.len();
        for (i, entry) in p.lists[k].entries.iter().enumerate() {
            self.nodes += 1;
            let cost = cost_prev + p.costs[k][i];
            if !self.constraint.admits(cost + p.min_rest[k]) {
                continue;
            }
            let score = score_prev + p.weights[k] * entry.score;
            self.chosen.push(i);
            if last {
                self.visits += 1;
                let chosen = &self.chosen;
                offer(&mut self.best, score, cost, || {
                    chosen
                        .iter()
                        .enumerate()
                        .map(|(b, &j)| p.lists[b].entries[j].arch.clone())
                        .collect()
                });
                self.chosen.pop();
                if self.options.early_return {
                    break;
                }
                continue;
            }
            self.visit(k + 1, cost, score);
            self.chosen.pop();
        }
    }
}

/// Full cross-product scan; the reference for [`traverse_search`].
pub fn exhaustive_search(
    lists: &[LocalScoreList],
    lut: &CostLut,
    constraint: &Constraint,
    weights: &[f64],
) -> Result<SearchOutcome> {
    let p = prepare(lists, lut, weights)?;
    let n = lists.len();
    let mut idx = vec![0usize; n];
    let mut best = None;
    let mut visits = 0u64;
    loop {
        visits += 1;
        let mut cost = Cost::default();
        let mut score = 0.0;
        for (k, &i) in idx.iter().enumerate() {
            cost = cost + p.costs[k][i];
            score += p.weights[k] * lists[k].entries[i].score;
        }
        if constraint.admits(cost) {
            offer(&mut best, score, cost, || {
                idx.iter()
                    .enumerate()
                    .map(|(k, &i)| lists[k].entries[i].arch.clone())
                    .collect()
            });
        }
        // odometer over list positions
        let mut k = n;
        loop {
            if k == 0 {
                return finish(&p, best, visits, visits);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < lists[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub budget: Constraint,
    /// `None` when no architecture fits the budget.
    pub outcome: Option<SearchOutcome>,
}

fn limit_key(v: Option<u64>) -> u64 {
    v.unwrap_or(u64::MAX)
}

/// One search per budget; budgets must be ascending in both limits.
pub fn search_under_budget_sweep(
    lists: &[LocalScoreList],
    lut: &CostLut,
    budgets: &[Constraint],
    weights: &[f64],
) -> Result<Vec<SweepRow>> {
    for w in budgets.windows(2) {
        if limit_key(w[0].max_params) > limit_key(w[1].max_params)
            || limit_key(w[0].max_macs) > limit_key(w[1].max_macs)
        {
            return Err(Error::Precondition(
                "budgets must be sorted ascending".into(),
            ));
        }
    }
    budgets
        .iter()
        .map(|b| match traverse_search(lists, lut, b, weights) {
            Ok(o) => Ok(SweepRow {
                budget: *b,
                outcome: Some(o),
            }),
            Err(Error::Infeasible { .. }) => Ok(SweepRow {
                budget: *b,
                outcome: None,
            }),
            Err(e) => Err(e),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::numkernel::Activation;
    use crate::rate::ScoreEntry;
    use crate::space::{
        build_cost_lut, enumerate_block, BlockSpec, CellSpec, OpDescriptor, SearchSpace,
    };
    use crate::verify::check_search;

    // Two identical one-layer blocks; op 0 is cheap, op 1 expensive.
    fn pair_space() -> SearchSpace {
        let block = BlockSpec {
            input_width: 3,
            output_width: 3,
            cells: vec![CellSpec::new(1, 4)],
        };
        SearchSpace::new(
            vec![
                OpDescriptor::bottleneck(2, Activation::Relu),
                OpDescriptor::bottleneck(6, Activation::Relu),
            ],
            vec![block.clone(), block],
        )
        .unwrap()
    }

    fn lists_for(space: &SearchSpace, scores: &[[f64; 2]]) -> Vec<LocalScoreList> {
        let lut = build_cost_lut(space);
        scores
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let entries = enumerate_block(space, k)
                    .unwrap()
                    .map(|arch| ScoreEntry {
                        score: s[arch.ops[0]],
                        cost: lut.block_cost(k, &arch).unwrap(),
                        arch,
                    })
                    .collect();
                LocalScoreList::from_unsorted(k, entries, 1, 0)
            })
            .collect()
    }

    #[test]
    fn hand_worked_two_block_instance() {
        let space = pair_space();
        let lut = build_cost_lut(&space);
        // block 0: a = op1 (score 1, expensive), b = op0 (score 2, cheap)
        // block 1: x = op1 (score 1, expensive), y = op0 (score 3, cheap)
        let lists = lists_for(&space, &[[2.0, 1.0], [3.0, 1.0]]);
        let lo = lut
            .block_cost(
                0,
                &BlockArch {
                    cell: 0,
                    ops: vec![0],
                },
            )
            .unwrap();
        let hi = lut
            .block_cost(
                0,
                &BlockArch {
                    cell: 0,
                    ops: vec![1],
                },
            )
            .unwrap();
        let limit = Constraint::params(lo.params + hi.params);
        for out in [
            traverse_search(&lists, &lut, &limit, &[]).unwrap(),
            exhaustive_search(&lists, &lut, &limit, &[]).unwrap(),
        ] {
            assert_eq!(out.score, 3.0);
            assert_eq!(out.arch.blocks[0].ops, vec![0]);
            assert_eq!(out.arch.blocks[1].ops, vec![1]);
        }
    }

    #[test]
    fn unconstrained_takes_each_top_entry() {
        let space = pair_space();
        let lut = build_cost_lut(&space);
        let lists = lists_for(&space, &[[2.0, 1.0], [0.5, 3.0]]);
        let out = traverse_search(&lists, &lut, &Constraint::NONE, &[]).unwrap();
        assert_eq!(
            out.arch.blocks,
            vec![
                lists[0].entries[0].arch.clone(),
                lists[1].entries[0].arch.clone()
            ]
        );
        assert_eq!(out.score, 1.5);
        assert_eq!(
            exhaustive_search(&lists, &lut, &Constraint::NONE, &[])
                .unwrap()
                .score,
            1.5
        );
    }

    #[test]
    fn infeasible_reports_minimum_cost() {
        let space = pair_space();
        let lut = build_cost_lut(&space);
        let lists = lists_for(&space, &[[2.0, 1.0], [3.0, 1.0]]);
        let lo = lut
            .block_cost(
                0,
                &BlockArch {
                    cell: 0,
                    ops: vec![0],
                },
            )
            .unwrap();
        match traverse_search(&lists, &lut, &Constraint::params(2 * lo.params - 1), &[]) {
            Err(Error::Infeasible { min_params, .. }) => assert_eq!(min_params, 2 * lo.params),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unsorted_lists_are_rejected() {
        let space = pair_space();
        let lut = build_cost_lut(&space);
        let mut lists = lists_for(&space, &[[2.0, 1.0], [3.0, 1.0]]);
        lists[0].entries.reverse();
        assert!(matches!(
            traverse_search(&lists, &lut, &Constraint::NONE, &[]),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            exhaustive_search(&lists, &lut, &Constraint::NONE, &[]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn weights_scale_block_scores() {
        let space = pair_space();
        let lut = build_cost_lut(&space);
        let lists = lists_for(&space, &[[2.0, 1.0], [3.0, 1.0]]);
        let out = traverse_search(&lists, &lut, &Constraint::NONE, &[2.0, 0.5]).unwrap();
        assert_eq!(out.score, 2.0 * 1.0 + 0.5 * 1.0);
        assert!(traverse_search(&lists, &lut, &Constraint::NONE, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn traversal_agrees_with_exhaustive_on_random_instances() {
        let check = check_search(200, 17).unwrap();
        assert_eq!(check.instances, 200);
        assert_eq!(check.mismatches, 0);
        assert!(check.binding > 0);
        assert_eq!(check.pruned_when_binding, check.binding);
    }

    #[test]
    fn budget_sweep_rows() {
        let space = pair_space();
        let lut = build_cost_lut(&space);
        let lists = lists_for(&space, &[[2.0, 1.0], [3.0, 1.0]]);
        let lo = lut
            .block_cost(
                0,
                &BlockArch {
                    cell: 0,
                    ops: vec![0],
                },
            )
            .unwrap()
            .params;
        let hi = lut
            .block_cost(
                0,
                &BlockArch {
                    cell: 0,
                    ops: vec![1],
                },
            )
            .unwrap()
            .params;
        let budgets: Vec<Constraint> = [2 * lo - 1, 2 * lo, lo + hi, lo + hi, 2 * hi, 10 * hi]
            .into_iter()
            .map(Constraint::params)
            .collect();
        let rows = search_under_budget_sweep(&lists, &lut, &budgets, &[]).unwrap();
        assert!(rows[0].outcome.is_none());
        assert_eq!(
            rows[2],
            SweepRow {
                budget: budgets[3],
                ..rows[3].clone()
            }
        );
        let free = exhaustive_search(&lists, &lut, &Constraint::NONE, &[]).unwrap();
        assert_eq!(rows[5].outcome.as_ref().unwrap().arch, free.arch);
        let scores: Vec<f64> = rows
            .iter()
            .filter_map(|r| r.outcome.as_ref().map(|o| o.score))
            .collect();
        assert!(scores.windows(2).all(|w| w[1] <= w[0]));
        for (row, b) in rows.iter().zip(&budgets) {
            if let Some(o) = &row.outcome {
                assert_eq!(
                    o.score,
                    exhaustive_search(&lists, &lut, b, &[]).unwrap().score
                );
            }
        }
        let mut reversed = budgets.clone();
        reversed.reverse();
        assert!(search_under_budget_sweep(&lists, &lut, &reversed, &[]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn early_return_and_relaxation(s in prop::collection::vec(0u8..8, 4), frac in 0.0f64..1.0) {
            let space = pair_space();
            let lut = build_cost_lut(&space);
            let scores = [[s[0] as f64, s[1] as f64], [s[2] as f64, s[3] as f64]];
            let lists = lists_for(&space, &scores);
            let lo = lut.block_cost(0, &BlockArch { cell: 0, ops: vec![0] }).unwrap().params;
            let hi = lut.block_cost(0, &BlockArch { cell: 0, ops: vec![1] }).unwrap().params;
            let limit = 2 * lo + ((2 * (hi - lo)) as f64 * frac) as u64;
            let tight = Constraint::params(limit);
            let a = traverse_search(&lists, &lut, &tight, &[]).unwrap();
            let b = traverse_search_with(&lists, &lut, &tight, &[], TraverseOptions { early_return: false }).unwrap();
            prop_assert_eq!(a.score, b.score);
            prop_assert!(a.visits <= 4);
            let loose = traverse_search(&lists, &lut, &Constraint::params(limit + hi), &[]).unwrap();
            prop_assert!(loose.score <= a.score);
        }
    }
}
