use std::collections::BTreeSet;

use gradepipe_core::analytics::EvaluationSplit;
use gradepipe_core::highlight::SheetClass;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Check};

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("sheet-{i:03}")).collect()
}

pub fn run() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e11);
    for case in 0..1000 {
        let seed: u64 = rng.gen();
        let n = rng.gen_range(1..=500);
        let all = ids(n);
        let highlighted: BTreeSet<String> = all.iter().filter(|_| rng.gen_bool(0.7)).cloned().collect();
        let split = EvaluationSplit::build("exam", &all, seed, |id| {
            if highlighted.contains(id) {
                SheetClass::Highlighted
            } else {
                SheetClass::NotHighlighted
            }
        })
        .map_err(|e| e.to_string())?;
        let ctx = || format!("case {case}, seed {seed}, n {n}");

        let everyone: BTreeSet<String> = all.iter().cloned().collect();
        ensure(split.s_hna.is_disjoint(&split.s_ha), || format!("{}: halves overlap", ctx()))?;
        let union: BTreeSet<String> = split.s_hna.union(&split.s_ha).cloned().collect();
        ensure(union == everyone, || format!("{}: halves do not cover the submissions", ctx()))?;
        ensure(split.s_hna.len().abs_diff(split.s_ha.len()) <= 1, || format!("{}: sizes differ by more than one", ctx()))?;
        ensure(split.s_h.is_disjoint(&split.s_nh), || format!("{}: S_H and S_NH overlap", ctx()))?;
        let treated: BTreeSet<String> = split.s_h.union(&split.s_nh).cloned().collect();
        ensure(treated == split.s_ha, || format!("{}: S_H and S_NH do not make up S_HA", ctx()))?;
        ensure(split.s_h.iter().all(|id| highlighted.contains(id)), || format!("{}: misfiled sheet in S_H", ctx()))?;
        ensure(split.s_nh.iter().all(|id| !highlighted.contains(id)), || format!("{}: misfiled sheet in S_NH", ctx()))?;

        let again = EvaluationSplit::build("exam", &all, seed, |id| {
            if highlighted.contains(id) {
                SheetClass::Highlighted
            } else {
                SheetClass::NotHighlighted
            }
        })
        .map_err(|e| e.to_string())?;
        ensure(again == split, || format!("{}: same seed gave a different split", ctx()))?;
    }

    let course_b = EvaluationSplit::build("course-b", &ids(49), 2024, |_| SheetClass::Highlighted)
        .map_err(|e| e.to_string())?;
    let sizes = (course_b.s_hna.len(), course_b.s_ha.len());
    ensure(sizes == (25, 24), || format!("n = 49 gave {sizes:?}, expected (25, 24)"))?;
    Ok("1000 random splits hold every invariant; n = 49 gives 25/24".into())
}
