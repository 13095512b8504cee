//! Template banks for the synthetic observation corpus.
//!
//! Five bands cover the level range from empty to flooding. A record's band is
//! drawn from a soft assignment around the band centres, so texts near a band
//! edge are ambiguous. Some reports are vague and only rule bands in or out
//! ("looks abnormal" is said of both a dry and a flooding channel).

use rand::seq::IndexedRandom;
use rand::Rng;

const BAND_CENTRES: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
const BAND_SPREAD: f64 = 0.08;

const PLACES: &[&str] = &["the river", "the canal", "the channel", "the creek", "the ditch", "the waterway"];
const TIMES: &[&str] = &["", "", "", "", "", " today", " now"];
const OPENERS: &[&str] = &["", "", "", "", "", "", "Hmm, ", "FYI "];

const EMPTY: &[&str] = &[
    "There's barely any water in {place}{time}.",
    "{Place} is almost completely dry{time}.",
    "You can see the bottom of {place}{time}.",
    "Hardly a trickle in {place}{time}.",
    "{Place} has practically dried up.",
    "Just puddles left in {place}{time}.",
    "{Place} is {deg} empty{time}.",
    "Not enough water in {place} to wet your feet.",
    "There’s barely any water out here.",
];

const LOW: &[&str] = &[
    "The water in {place} is {deg} low{time}.",
    "{Place} is running {deg} shallow{time}.",
    "Water level is {deg} below normal{time}.",
    "Only a thin stream flowing in {place}{time}.",
    "{Place} could really use some rain.",
    "Not much flow in {place}{time}.",
    "The rocks are showing in {place}{time}.",
    "Shallow water, easy to wade across {place}.",
];

const MID: &[&str] = &[
    "The river’s flowing really gently today.",
    "{Place} looks normal{time}.",
    "Water level in {place} seems about average{time}.",
    "{Place} is flowing calmly{time}.",
    "Nothing unusual about {place}{time}.",
    "A steady, comfortable flow in {place}{time}.",
    "{Place} is at its usual level.",
    "Peaceful water in {place}{time}, just right.",
];

const HIGH: &[&str] = &[
    "The water’s pretty high… hope it’s okay.",
    "{Place} is {deg} high{time}.",
    "The water in {place} is {deg} rising{time}.",
    "{Place} is running fast and full{time}.",
    "Water is getting close to the banks of {place}.",
    "{Place} looks swollen{time}, better keep an eye on it.",
    "Strong current in {place}{time}, level is up.",
    "Higher than usual in {place}{time}.",
];

const FLOOD: &[&str] = &[
    "Almost flooding… this is scary!",
    "{Place} is about to overflow{time}!",
    "Water is spilling over the banks of {place}!",
    "{Place} is dangerously high{time}, stay away!",
    "It's flooding near {place}{time}!",
    "The fields next to {place} are going under!",
    "{Place} is at the very top of the banks{time}.",
    "Emergency level at {place}, water everywhere!",
];

const BANDS: [&[&str]; 5] = [EMPTY, LOW, MID, HIGH, FLOOD];

const ABNORMAL: &[&str] = &[
    "Something is off with {place}{time}.",
    "{Place} does not look normal at all{time}.",
    "Worrying level at {place}{time}, someone should check.",
    "Strange day for {place}, not the usual level.",
    "I'd report {place}{time}, the level is abnormal.",
];

const SLIGHTLY_OFF: &[&str] = &[
    "{Place} is a bit different from its usual level{time}.",
    "Level at {place} is slightly off{time}.",
    "Not quite the normal level at {place}{time}.",
    "{Place} has changed a little since yesterday.",
];

const ORDINARY: &[&str] = &[
    "{Place} looks fine{time}.",
    "Nothing to report from {place}{time}.",
    "No problems at {place}{time}.",
    "All okay at {place} as far as I can tell.",
];

const NOT_FLOODING: &[&str] = &[
    "No sign of flooding at {place}{time}.",
    "{Place} is well inside its banks{time}.",
    "No danger of overflow at {place}.",
];

const NOT_DRY: &[&str] = &[
    "There is water flowing in {place}{time}.",
    "{Place} is not dry{time}.",
    "Some current in {place}{time}.",
];

/// Vague families and the bands each is used for.
const VAGUE: [(&[&str], &[usize]); 5] = [
    (ABNORMAL, &[0, 4]),
    (SLIGHTLY_OFF, &[1, 3]),
    (ORDINARY, &[1, 2, 3]),
    (NOT_FLOODING, &[0, 1, 2, 3]),
    (NOT_DRY, &[1, 2, 3, 4]),
];

const VAGUE_RATE: f64 = 0.4;

const DEGREES: [&str; 3] = ["a little", "quite", "really"];

const SYNONYMS: &[(&str, &str)] = &[
    ("really", "very"),
    ("pretty", "rather"),
    ("looks", "seems"),
    ("almost", "nearly"),
    ("barely", "hardly"),
    ("calmly", "quietly"),
    ("fast", "quickly"),
    ("dangerously", "seriously"),
];

/// Dialect fragments for low water, spelled so they share little with the templates above.
const DIALECT_SUBJECTS: &[&str] = &["Yon burn", "Thon wee burn", "T' beck", "Yonder crick", "That there crick", "The watter doon the glen"];
const DIALECT_PREDICATES: &[&str] = &[
    "hae nae a drap left in't",
    "is gane plumb drouthy, ken",
    "ain't got nary a drop, I reckon",
    "is nobbut a dribble o' muck",
    "be nowt but stanes an' glaur the noo",
    "is drouthit tae the boatom, aye",
];

fn band_weights(ratio: f64) -> [f64; 5] {
    let mut w = [0.0; 5];
    for (w, c) in w.iter_mut().zip(BAND_CENTRES) {
        let d = (ratio - c) / BAND_SPREAD;
        *w = (-0.5 * d * d).exp();
    }
    w
}

fn pick_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn jitter<R: Rng + ?Sized>(text: String, rng: &mut R) -> String {
    let mut out = text;
    for (a, b) in SYNONYMS {
        if out.contains(a) && rng.random_bool(0.35) {
            out = out.replacen(a, b, 1);
        }
    }
    if out.ends_with('.') {
        let endings = [".", ".", "", "..", "!"];
        let end = endings.choose(rng).unwrap();
        out.pop();
        out.push_str(end);
    }
    out
}

/// One synthetic report for a water level ratio in `[0, 1]`.
pub fn synth_text<R: Rng + ?Sized>(ratio: f64, rng: &mut R) -> String {
    let band = pick_weighted(&band_weights(ratio), rng);
    let template = if rng.random_bool(VAGUE_RATE) {
        let families: Vec<&[&str]> = VAGUE.iter().filter(|(_, b)| b.contains(&band)).map(|(f, _)| *f).collect();
        families.choose(rng).unwrap().choose(rng).unwrap()
    } else {
        BANDS[band].choose(rng).unwrap()
    };
    let place = PLACES.choose(rng).unwrap();
    let time = TIMES.choose(rng).unwrap();
    let mut text = template
        .replace("{Place}", &capitalize(place))
        .replace("{place}", place)
        .replace("{time}", time);
    if text.contains("{deg}") {
        text = text.replace("{deg}", DEGREES.choose(rng).unwrap());
    }
    let opener = OPENERS.choose(rng).unwrap();
    if !opener.is_empty() {
        let mut chars = text.chars();
        let first = chars.next().map(|c| c.to_lowercase().collect::<String>()).unwrap_or_default();
        text = format!("{opener}{first}{}", chars.as_str());
    }
    jitter(text, rng)
}

/// Every dialect subject/predicate combination, in a fixed order.
pub fn dialect_bank() -> Vec<String> {
    DIALECT_SUBJECTS
        .iter()
        .flat_map(|s| DIALECT_PREDICATES.iter().map(move |p| format!("{s} {p}")))
        .collect()
}
