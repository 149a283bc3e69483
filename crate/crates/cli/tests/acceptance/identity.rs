//! Roster mapping on 200 students whose recognized rolls carry look-alike
//! character substitutions, plus edit distance against a textbook
//! dynamic-programming oracle.

use std::collections::HashSet;

use gradepipe_core::identity::{
    edit_distance, is_bijective, map_to_roster, IdentityCandidate, MappingStatus, Roster, RosterEntry,
    DEFAULT_THRESHOLD,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Check};

/// Full-table Levenshtein distance over chars.
fn dp_distance(a: &[char], b: &[char]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

/// Every string over `{a, b, c}` of length `0..=max_len`.
fn all_strings(max_len: usize) -> Vec<Vec<char>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s: &Vec<char>| {
                ['a', 'b', 'c'].into_iter().map(move |c| {
                    let mut t = s.clone();
                    t.push(c);
                    t
                })
            })
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

/// Every pair of strings up to length 6; every string up to length 12
/// against fixed probes of several lengths; random long pairs.
fn edit_distance_check() -> Result<String, String> {
    let short = all_strings(6);
    let mut compared = 0usize;
    for a in &short {
        let sa: String = a.iter().collect();
        for b in &short {
            let sb: String = b.iter().collect();
            let (got, want) = (edit_distance(&sa, &sb), dp_distance(a, b));
            ensure(got == want, || format!("d({sa:?}, {sb:?}) = {got}, oracle {want}"))?;
        }
        compared += short.len();
    }
    let probes: Vec<Vec<char>> =
        ["", "abc", "cabbac", "abcabcabcabc", "ccccccccbbbb", "bacabacab"].iter().map(|s| s.chars().collect()).collect();
    for a in all_strings(12) {
        let sa: String = a.iter().collect();
        for p in &probes {
            let sp: String = p.iter().collect();
            let (got, want) = (edit_distance(&sa, &sp), dp_distance(&a, p));
            ensure(got == want, || format!("d({sa:?}, {sp:?}) = {got}, oracle {want}"))?;
            compared += 1;
        }
    }
    // Patterns beyond one machine word take the fallback path.
    let mut rng = ChaCha8Rng::seed_from_u64(0xed17);
    for _ in 0..2000 {
        let gen = |rng: &mut ChaCha8Rng, n: usize| -> Vec<char> { (0..n).map(|_| *['a', 'b', 'c'].choose(rng).unwrap()).collect() };
        let (la, lb) = (rng.gen_range(0..=90), rng.gen_range(0..=90));
        let (a, b) = (gen(&mut rng, la), gen(&mut rng, lb));
        let (sa, sb): (String, String) = (a.iter().collect(), b.iter().collect());
        ensure(edit_distance(&sa, &sb) == dp_distance(&a, &b), || format!("d({sa:?}, {sb:?}) disagrees"))?;
        compared += 1;
    }
    Ok(format!("{compared} distance pairs agree"))
}

const CONFUSIONS: &[(char, char)] = &[('0', 'O'), ('1', 'l'), ('5', 'S'), ('8', 'B'), ('2', 'Z'), ('6', 'G')];

fn corrupt(roll: &str, times: usize, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = roll.chars().collect();
    let mut positions: Vec<usize> =
        (0..chars.len()).filter(|&i| CONFUSIONS.iter().any(|(d, _)| *d == chars[i])).collect();
    positions.shuffle(rng);
    for &i in positions.iter().take(times) {
        let (_, l) = CONFUSIONS.iter().find(|(d, _)| *d == chars[i]).unwrap();
        chars[i] = *l;
    }
    chars.into_iter().collect()
}

fn mapping_check() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1d);
    // Mostly random rolls, plus runs of neighbours one digit apart so that
    // some corruptions land equally close to two students.
    let mut rolls: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    while rolls.len() < 200 {
        let base = format!("{}{:05}", ["CS21B", "EE22M", "ME20D"].choose(&mut rng).unwrap(), rng.gen_range(0..100_000));
        let group: Vec<String> = if rng.gen_bool(0.3) {
            let stem = &base[..base.len() - 1];
            ['0', '1', '5', '8'].iter().map(|d| format!("{stem}{d}")).collect()
        } else {
            vec![base]
        };
        for r in group {
            if rolls.len() < 200 && seen.insert(r.clone()) {
                rolls.push(r);
            }
        }
    }
    let roster = Roster::new(rolls.iter().map(|r| RosterEntry { roll: r.clone(), name: format!("Student {r}") }).collect())
        .map_err(|e| e.to_string())?;

    let mut order: Vec<usize> = (0..rolls.len()).collect();
    order.shuffle(&mut rng);
    let candidates: Vec<IdentityCandidate> = order
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let times = match k % 10 {
                0..=5 => 1,
                6 | 7 => 2,
                8 => 3,
                _ => 0,
            };
            IdentityCandidate {
                bundle_id: format!("sheet-{k:03}"),
                name: String::new(),
                roll: corrupt(&rolls[s], times, &mut rng),
            }
        })
        .collect();

    let mappings = map_to_roster(&candidates, &roster, DEFAULT_THRESHOLD);
    ensure(mappings.len() == candidates.len(), || "one mapping per sheet".into())?;
    ensure(is_bijective(&mappings), || "mapping is not one-to-one".into())?;

    let chars: Vec<Vec<char>> = rolls.iter().map(|r| r.chars().collect()).collect();
    let (mut expected_auto, mut ties, mut far, mut corrupted_auto) = (0, 0, 0, 0);
    for ((m, c), &truth) in mappings.iter().zip(&candidates).zip(&order) {
        let cand: Vec<char> = c.roll.chars().collect();
        let dists: Vec<usize> = chars.iter().map(|r| dp_distance(&cand, r)).collect();
        let min = *dists.iter().min().unwrap();
        let at_min = dists.iter().filter(|&&d| d == min).count();
        if let Some(roll) = &m.matched_roll {
            ensure(*roll == rolls[truth], || format!("{} mapped to {roll}, truly {}", c.bundle_id, rolls[truth]))?;
        }
        if min <= DEFAULT_THRESHOLD && at_min == 1 {
            expected_auto += 1;
            corrupted_auto += usize::from(min > 0);
            ensure(m.status == MappingStatus::Auto && m.matched_roll.is_some(), || {
                format!("{} ({}) has a unique match at distance {min} but is {:?}", c.bundle_id, c.roll, m.status)
            })?;
            ensure(m.edit_distance as usize == min, || format!("{}: distance {} vs oracle {min}", c.bundle_id, m.edit_distance))?;
        } else {
            if at_min > 1 {
                ties += 1;
            } else {
                far += 1;
            }
            ensure(m.status == MappingStatus::Unmapped && m.matched_roll.is_none(), || {
                format!("{} ({}) is ambiguous or too far but was mapped", c.bundle_id, c.roll)
            })?;
        }
    }
    ensure(ties > 0 && far > 0 && corrupted_auto > 0, || format!("corpus lacks a case: ties {ties}, far {far}"))?;
    Ok(format!(
        "{expected_auto} auto-mapped ({corrupted_auto} corrupted), {ties} ties and {far} distant left unmapped, none wrong"
    ))
}

pub fn run() -> Check {
    let mapping = mapping_check()?;
    let distance = edit_distance_check()?;
    Ok(format!("{mapping}; {distance}"))
}
