use gradepipe_core::layout::{QuestionRegion, QuestionType};
use gradepipe_core::regions::{deduce_answer_regions, AnswerRegion, DeductionConfig};
use gradepipe_core::PageDims;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Check};

struct Case {
    questions: Vec<QuestionRegion>,
    dims: Vec<PageDims>,
    config: DeductionConfig,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let pages = rng.gen_range(1..=5);
    let config = DeductionConfig { side_margin: rng.gen_range(0..40), bottom_margin: rng.gen_range(0..40), vertical_offset: 0 };
    let dims: Vec<PageDims> =
        (0..pages).map(|_| PageDims::new(rng.gen_range(300..1500), rng.gen_range(400..2000))).collect();
    let n = rng.gen_range(1..=20);
    let mut per_page = vec![0usize; pages];
    for _ in 0..n {
        per_page[rng.gen_range(0..pages)] += 1;
    }
    let mut questions = Vec::new();
    for (page, &count) in per_page.iter().enumerate() {
        let floor = dims[page].height - config.bottom_margin;
        // Boxes may touch the next box, leaving no answer space.
        let ys = loop {
            let mut ys: Vec<u32> = (0..2 * count).map(|_| rng.gen_range(0..=floor)).collect();
            ys.sort_unstable();
            if ys.chunks(2).all(|b| b[0] < b[1]) {
                break ys;
            }
        };
        for b in ys.chunks(2) {
            let x0 = rng.gen_range(0..dims[page].width / 2);
            let x1 = rng.gen_range(x0 + 1..=dims[page].width);
            questions.push(QuestionRegion {
                question_id: String::new(),
                order: 0,
                page_index: page as u32,
                x0,
                y0: b[0],
                x1,
                y1: b[1],
                text: String::new(),
                question_type: Some(QuestionType::Short),
                confirmed: true,
            });
        }
    }
    for (i, q) in questions.iter_mut().enumerate() {
        q.order = i as u32 + 1;
        q.question_id = format!("q{}", i + 1);
    }
    Case { questions, dims, config }
}

/// Counts, row by row, how many question boxes and answer regions cover each
/// pixel row, and requires exactly one from the first question's top to the
/// bottom margin and none elsewhere.
fn check(case: &Case, answers: &[AnswerRegion]) -> Result<(), String> {
    ensure(answers.len() == case.questions.len(), || "one region per question".into())?;
    for (a, q) in answers.iter().zip(&case.questions) {
        ensure(a.question_id == q.question_id && a.page_index == q.page_index, || {
            format!("region for {} out of order", q.question_id)
        })?;
        let width = case.dims[q.page_index as usize].width;
        ensure(a.x0 == case.config.side_margin && a.x1 == width - case.config.side_margin, || {
            format!("{}: columns {}..{} ignore the side margins", q.question_id, a.x0, a.x1)
        })?;
        ensure(a.degenerate == (a.y0 >= a.y1), || format!("{}: degenerate flag wrong", q.question_id))?;
    }
    for (page, dims) in case.dims.iter().enumerate() {
        let page = page as u32;
        let floor = (dims.height - case.config.bottom_margin) as usize;
        let mut cover = vec![0u32; dims.height as usize];
        let mut first_top = None;
        for q in case.questions.iter().filter(|q| q.page_index == page) {
            first_top = first_top.or(Some(q.y0 as usize));
            cover[q.y0 as usize..q.y1 as usize].iter_mut().for_each(|c| *c += 1);
        }
        for a in answers.iter().filter(|a| a.page_index == page && !a.degenerate) {
            cover[a.y0 as usize..a.y1 as usize].iter_mut().for_each(|c| *c += 1);
        }
        // A degenerate region must sit where its question meets the next box.
        for (i, _) in answers.iter().enumerate().filter(|(_, a)| a.page_index == page && a.degenerate) {
            let q = &case.questions[i];
            let next_top = case.questions.get(i + 1).filter(|n| n.page_index == page).map_or(floor, |n| n.y0 as usize);
            ensure(next_top <= q.y1 as usize, || format!("{}: flagged degenerate but has room", q.question_id))?;
        }
        let Some(top) = first_top else { continue };
        for (y, &c) in cover.iter().enumerate() {
            let want = u32::from((top..floor).contains(&y));
            ensure(c == want, || format!("page {page} row {y} covered {c} times, expected {want}"))?;
        }
    }
    Ok(())
}

pub fn run() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x711e);
    let mut degenerate = 0;
    let cases = 1000;
    for case_no in 0..cases {
        let case = random_case(&mut rng);
        let answers = deduce_answer_regions("sheet", &case.questions, &case.dims, &case.config)
            .map_err(|e| format!("case {case_no}: {e}"))?;
        check(&case, &answers).map_err(|e| format!("case {case_no}: {e}"))?;
        degenerate += answers.iter().filter(|a| a.degenerate).count();
    }
    Ok(format!("{cases} random question sets tile their pages ({degenerate} degenerate regions flagged)"))
}
