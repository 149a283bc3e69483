//! Fifty answer crops with planted keywords, read back through the sidecar
//! backend. Every written token remembers the plain word it was made from,
//! so the expected matches come from the corpus itself rather than from
//! normalization.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use gradepipe_core::highlight::{match_keywords, render_highlights, KeywordSpec, OverlayStyle};
use gradepipe_core::layout::recognize_crop;
use gradepipe_core::ocr::{write_sidecar, SidecarRecognizer};
use gradepipe_core::{ColorMode, PageImage, PixelRect, WordBox};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Check};

const FILLER: &[&str] = &["the", "so", "we", "get", "value", "hence", "then", "is", "of", "a", "to"];
const TOPICS: &[&str] = &["cache", "pipeline", "hazard", "latency", "register", "branch", "o(n)", "mutex", "2's"];
const PHRASES: &[&str] = &["branch predictor", "page table", "critical section"];
const PREFIX: &[&str] = &["", "", "", "(", "\"", "'"];
const SUFFIX: &[&str] = &["", "", "", ",", ".", ";", ":", ")", "!", "?", "\"", ".)"];

struct Token {
    written: String,
    plain: String,
}

fn decorate(plain: &str, rng: &mut ChaCha8Rng) -> String {
    let cased = match rng.gen_range(0..4) {
        0 => plain.to_uppercase(),
        1 => {
            let mut c = plain.chars();
            c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
        }
        _ => plain.to_owned(),
    };
    let prefix = if plain.contains('(') || plain.contains('\'') { "" } else { PREFIX.choose(rng).unwrap() };
    let suffix = SUFFIX.choose(rng).unwrap();
    format!("{prefix}{cased}{suffix}")
}

struct Crop {
    image: PageImage,
    words: Vec<WordBox>,
    plain_at: HashMap<(i64, i64), String>,
    keywords: Vec<String>,
}

fn build_crop(dir: &Path, i: usize, rng: &mut ChaCha8Rng) -> Result<Crop, String> {
    let (width, height) = (rng.gen_range(700..1000u32), rng.gen_range(500..800u32));
    let keywords: Vec<String> = {
        let count = rng.gen_range(1..=3);
        let mut k: Vec<String> = TOPICS.choose_multiple(rng, count).map(|s| (*s).to_owned()).collect();
        if rng.gen_bool(0.5) {
            k.push((*PHRASES.choose(rng).unwrap()).to_owned());
        }
        k
    };
    // Lines of tokens; keywords and phrase parts are sprinkled in.
    let mut lines: Vec<Vec<Token>> = Vec::new();
    for _ in 0..rng.gen_range(3..8) {
        let mut line = Vec::new();
        for _ in 0..rng.gen_range(2..7) {
            let roll = rng.gen_range(0..10);
            let plains: Vec<String> = if roll < 2 {
                vec![keywords.choose(rng).unwrap().clone()]
            } else if roll < 4 {
                vec![(*TOPICS.choose(rng).unwrap()).to_owned()]
            } else if roll < 5 {
                vec![(*PHRASES.choose(rng).unwrap()).to_owned()]
            } else {
                vec![(*FILLER.choose(rng).unwrap()).to_owned()]
            };
            for plain in plains.iter().flat_map(|p| p.split(' ')) {
                line.push(Token { written: decorate(plain, rng), plain: plain.to_owned() });
            }
        }
        lines.push(line);
    }

    let mut data = vec![255u8; (width * height) as usize];
    let mut boxes = Vec::new();
    let mut plain_at = HashMap::new();
    let mut y = 60.0;
    for line in &lines {
        let mut x = 30.0;
        for t in line {
            let w = 11.0 * t.written.chars().count() as f64 + 6.0;
            if x + w > f64::from(width) - 30.0 {
                break;
            }
            let word = WordBox::new(t.written.clone(), x, y, x + w, y + 26.0);
            let r = word.pixel_rect();
            for py in r.y0 + 6..r.y1 - 6 {
                for px in r.x0 + 2..r.x1 - 2 {
                    data[(py * width + px) as usize] = 40;
                }
            }
            plain_at.insert((x.round() as i64, y.round() as i64), t.plain.clone());
            boxes.push(word);
            x += w + 12.0;
        }
        y += 44.0;
        if y + 26.0 > f64::from(height) - 60.0 {
            break;
        }
    }

    // The page carries a header line that falls outside the crop.
    boxes.push(WordBox::new("Q7", 30.0, 10.0, 70.0, 34.0));
    let page = PageImage::new(width, height, ColorMode::Gray, data, 0).map_err(|e| e.to_string())?;
    let path = dir.join(format!("crop-{i}.png"));
    page.save_png(&path).map_err(|e| e.to_string())?;
    write_sidecar(&path, &boxes).map_err(|e| e.to_string())?;

    let region = PixelRect::new(10, 50, width - 10, height - 20);
    let image = page.crop(region).map_err(|e| e.to_string())?;
    let words = recognize_crop(&image, Some(&path), region, &SidecarRecognizer).map_err(|e| e.to_string())?;
    // Shift the remembered positions into crop coordinates.
    let plain_at = plain_at
        .into_iter()
        .map(|((x, y), p)| ((x - i64::from(region.x0), y - i64::from(region.y0)), p))
        .collect();
    Ok(Crop { image, words, plain_at, keywords })
}

/// Every `(word index, keyword)` pair where the keyword's words equal the
/// plain words starting at that index, checked for every word and keyword.
fn oracle(crop: &Crop) -> Result<BTreeSet<(usize, String)>, String> {
    let plain: Vec<&String> = crop
        .words
        .iter()
        .map(|w| {
            crop.plain_at
                .get(&(w.x0.round() as i64, w.y0.round() as i64))
                .ok_or_else(|| format!("no plain word recorded for `{}`", w.text))
        })
        .collect::<Result<_, _>>()?;
    let mut expected = BTreeSet::new();
    for start in 0..plain.len() {
        for keyword in &crop.keywords {
            let parts: Vec<&str> = keyword.split(' ').collect();
            if start + parts.len() <= plain.len() && parts.iter().enumerate().all(|(j, p)| plain[start + j] == p) {
                for j in 0..parts.len() {
                    expected.insert((start + j, keyword.clone()));
                }
            }
        }
    }
    Ok(expected)
}

pub fn run() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x419);
    let style = OverlayStyle::default();
    let (mut total_matches, mut crops_with_matches) = (0, 0);
    for i in 0..50 {
        let crop = build_crop(dir.path(), i, &mut rng)?;
        ensure(crop.words.iter().all(|w| w.text != "Q7"), || format!("crop {i}: header leaked into the crop"))?;
        let spec = KeywordSpec::new("q7", &crop.keywords);
        let set = match_keywords("sheet", &crop.words, &spec);
        let index_of = |w: &WordBox| crop.words.iter().position(|c| c == w);
        let got: BTreeSet<(usize, String)> = set
            .matches
            .iter()
            .map(|m| index_of(&m.word).map(|i| (i, m.keyword.clone())).ok_or("match on an unknown word"))
            .collect::<Result<_, _>>()?;
        let want = oracle(&crop)?;
        ensure(got == want, || {
            let missing: Vec<_> = want.difference(&got).map(|(i, k)| (crop.words[*i].text.clone(), k)).collect();
            let extra: Vec<_> = got.difference(&want).map(|(i, k)| (crop.words[*i].text.clone(), k)).collect();
            format!("crop {i}: missing {missing:?}, unexpected {extra:?}")
        })?;
        ensure(set.matches.len() == got.len(), || format!("crop {i}: duplicate matches"))?;

        let shown = render_highlights(&crop.image, &set, &style).map_err(|e| e.to_string())?;
        let before = crop.image.to_rgb();
        let boxes: Vec<PixelRect> = set.matches.iter().map(|m| m.word.pixel_rect()).collect();
        let mut changed_inside = 0;
        for y in 0..before.height() {
            for x in 0..before.width() {
                let inside = boxes.iter().any(|r| r.contains(x, y));
                let same = shown.rgb(x, y) == before.rgb(x, y);
                ensure(inside || same, || format!("crop {i}: pixel ({x}, {y}) changed outside every match box"))?;
                changed_inside += usize::from(inside && !same);
            }
        }
        ensure(boxes.is_empty() || changed_inside > 0, || format!("crop {i}: matches drew nothing"))?;
        total_matches += set.matches.len();
        crops_with_matches += usize::from(!set.matches.is_empty());
    }
    ensure(crops_with_matches >= 25, || format!("only {crops_with_matches} crops had matches"))?;
    Ok(format!("50 crops match the oracle ({total_matches} matches on {crops_with_matches} crops); no stray pixels"))
}
