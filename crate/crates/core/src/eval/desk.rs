//! Synthetic assistant-style corpus with an embedded entity lexicon.
//!
//! Sentences come from command and chit-chat templates. Entity slots (people,
//! places, artists, song titles) are filled from generated pseudo-word
//! lexicons. Training text draws entities from a Zipf distribution over the
//! "seen" part of each lexicon, so most entities are rare. Test utterances
//! mix head entities, uniformly drawn seen entities and entities that never
//! occur in training.

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskConfig {
    pub train_sentences: usize,
    pub test_utterances: usize,
    /// Fraction of each lexicon never used in training.
    pub unseen_fraction: f64,
    /// Zipf exponent for entity draws in training text.
    pub entity_zipf: f64,
    /// Test entity mix: probability of a uniform draw over seen entities.
    pub test_uniform_seen: f64,
    /// Test entity mix: probability of an unseen entity.
    pub test_unseen: f64,
    /// Share of command-template sentences (the rest is free-form chit-chat).
    pub train_command_share: f64,
    pub test_command_share: f64,
    pub seed: u64,
}

impl Default for DeskConfig {
    fn default() -> Self {
        Self {
            train_sentences: 50_000,
            test_utterances: 500,
            unseen_fraction: 0.15,
            entity_zipf: 1.1,
            test_uniform_seen: 0.3,
            test_unseen: 0.15,
            train_command_share: 0.5,
            test_command_share: 0.6,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeskCorpus {
    pub train: Vec<Vec<String>>,
    pub test: Vec<Vec<String>>,
}

impl DeskCorpus {
    pub fn train_text(&self) -> String {
        join_lines(&self.train)
    }

    pub fn test_text(&self) -> String {
        join_lines(&self.test)
    }
}

fn join_lines(sents: &[Vec<String>]) -> String {
    let mut out = String::new();
    for s in sents {
        out.push_str(&s.join(" "));
        out.push('\n');
    }
    out
}

const NOUNS: &str = "time day way thing world life hand part child eye place week case point number group \
    problem fact house car door room phone message email meeting lunch dinner breakfast coffee tea water \
    music song movie show game book story picture photo video list note plan trip flight train bus ticket \
    weather rain snow sun morning night evening afternoon office school work job team friend family mother \
    father brother sister kid dog cat garden kitchen light window table chair bed shop store market street \
    road city town park beach river lake mountain price bill money card account order package delivery \
    battery alarm timer reminder calendar schedule appointment doctor dentist report project idea question \
    answer news paper letter birthday party gift present holiday weekend hat bat map cap cup pen box bag \
    key lock coat shoe sock shirt dress ring watch clock lamp desk sofa rug wall floor roof yard fence gate \
    boat ship plane bike truck van cab tram road bridge tower hall church bank hotel cafe bar pub club gym \
    pool court field farm barn hill valley island coast shore sea bay ocean forest tree leaf flower seed \
    grass rock stone sand dust mud ice fire smoke wind storm cloud star moon sky bread cake pie soup salad \
    rice meat fish egg milk cheese fruit apple pear grape lemon orange bean corn salt sugar oil wine beer";
const VERBS: &str = "get make go know take see come think look want give use find tell ask work seem feel \
    try leave call keep let begin help show hear play run move like live believe hold bring write sit stand \
    lose pay meet include continue set learn change lead understand watch follow stop create speak read \
    spend grow open walk win offer remember love consider appear buy wait serve send expect build stay fall \
    cut reach remove check book cancel order finish start turn clean cook fix share carry catch climb drop \
    drive eat drink fill hide jump kick kiss knock laugh lift mark miss mix nod paint pick plant pour pull \
    push rest ride ring roll rush save shake shout shut sing skip smell smile sort step stir swim taste \
    throw touch trust wash wave wish worry wrap yell visit vote fold";
const ADJS: &str = "good new first last long great little own other old right big high different small \
    large next early young important few public bad same able late hard major better best free sure clear \
    full special easy strong certain real happy quick slow warm cold hot nice busy quiet loud bright dark \
    cheap expensive wet dry soft loud thin thick wide narrow deep fresh fine rich poor safe calm wild \
    sweet sour tiny huge short tall brave proud kind fair fast neat rare pale pink red blue green black white";
const GENRES: &str = "jazz rock pop blues classical country folk metal soul reggae";
const NUMBERS: &str = "one two three four five six seven eight nine ten eleven twelve fifteen twenty thirty";
const DAYS: &str = "monday tuesday wednesday thursday friday saturday sunday today tomorrow tonight";
const COMMANDS: &[&str] = &[
    "call {person}",
    "call {person} on mobile",
    "call {person} at home",
    "please call {person}",
    "send a message to {person}",
    "text {person} that i am running late",
    "tell {person} i will be there soon",
    "email {person} about the {noun}",
    "set up a meeting with {person} {day}",
    "what is the phone number of {person}",
    "play {song}",
    "play {song} by {artist}",
    "play something by {artist}",
    "play the latest album by {artist}",
    "play some {genre} music",
    "i want to hear {song}",
    "add {song} to my playlist",
    "navigate to {place}",
    "how far is {place} from here",
    "what is the weather in {place} {day}",
    "find a {noun} near {place}",
    "book a flight to {place} on {day}",
    "show me hotels in {place}",
    "how long does it take to drive to {place}",
    "is it going to rain in {place} {day}",
    "set an alarm for {number} o clock",
    "set a timer for {number} minutes",
    "remind me to {chore} at {number}",
    "remind me to {chore} {day}",
    "what is on my calendar {day}",
];

const DETS: &str = "the a my your this that some our";
const PREPS: &str = "in on at with for from to near after before about";
const SUBJECTS: &str = "i we you they he she";
const AUXES: &[&str] = &[
    "will",
    "can",
    "should",
    "did not",
    "want to",
    "need to",
    "have to",
    "could",
    "would like to",
];

/// A lexicon of entities, each a short word sequence, ranked by popularity.
struct Lexicon {
    entries: Vec<Vec<String>>,
    seen: usize,
    zipf: WeightedIndex<f64>,
}

impl Lexicon {
    fn new(entries: Vec<Vec<String>>, unseen_fraction: f64, exponent: f64) -> Self {
        let seen = ((entries.len() as f64) * (1.0 - unseen_fraction)).round().max(1.0) as usize;
        let weights: Vec<f64> = (1..=seen).map(|r| (r as f64).powf(-exponent)).collect();
        Self {
            entries,
            seen,
            zipf: WeightedIndex::new(weights).expect("positive weights"),
        }
    }

    fn train_draw<R: Rng>(&self, rng: &mut R) -> &[String] {
        &self.entries[self.zipf.sample(rng)]
    }

    fn test_draw<R: Rng>(&self, rng: &mut R, config: &DeskConfig) -> &[String] {
        let u: f64 = rng.gen();
        if u < config.test_unseen && self.seen < self.entries.len() {
            &self.entries[rng.gen_range(self.seen..self.entries.len())]
        } else if u < config.test_unseen + config.test_uniform_seen {
            &self.entries[rng.gen_range(0..self.seen)]
        } else {
            self.train_draw(rng)
        }
    }
}

struct PseudoWords {
    used: HashSet<String>,
}

impl PseudoWords {
    const ONSETS: [&'static str; 22] = [
        "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kr", "st", "tr", "sh", "ch",
        "th",
    ];
    const VOWELS: [&'static str; 8] = ["a", "e", "i", "o", "u", "ai", "ou", "ea"];
    const CODAS: [&'static str; 9] = ["", "", "", "n", "r", "l", "s", "th", "nd"];

    fn new(reserved: &[&str]) -> Self {
        Self {
            used: reserved.iter().map(|w| w.to_string()).collect(),
        }
    }

    fn fresh<R: Rng>(&mut self, rng: &mut R) -> String {
        loop {
            let syllables = rng.gen_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(Self::ONSETS.choose(rng).expect("non-empty"));
                w.push_str(Self::VOWELS.choose(rng).expect("non-empty"));
                w.push_str(Self::CODAS.choose(rng).expect("non-empty"));
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

fn words(list: &str) -> Vec<&str> {
    list.split_whitespace().collect()
}

struct Lexicons {
    people: Lexicon,
    places: Lexicon,
    artists: Lexicon,
    songs: Lexicon,
}

fn build_lexicons<R: Rng>(rng: &mut R, config: &DeskConfig) -> Lexicons {
    let mut reserved: Vec<&str> = Vec::new();
    for list in [NOUNS, VERBS, ADJS, GENRES, NUMBERS, DAYS] {
        reserved.extend(words(list));
    }
    for chore in CHORES {
        reserved.extend(chore.split_whitespace());
    }
    for list in [DETS, PREPS, SUBJECTS] {
        reserved.extend(words(list));
    }
    for aux in AUXES {
        reserved.extend(aux.split_whitespace());
    }
    for t in COMMANDS {
        reserved.extend(t.split_whitespace().filter(|w| !w.starts_with('{')));
    }
    let mut gen = PseudoWords::new(&reserved);
    let firsts: Vec<String> = (0..220).map(|_| gen.fresh(rng)).collect();
    let lasts: Vec<String> = (0..260).map(|_| gen.fresh(rng)).collect();
    let people: Vec<Vec<String>> = (0..600)
        .map(|i| {
            let first = firsts[i % firsts.len()].clone();
            if i < firsts.len() {
                vec![first]
            } else {
                vec![first, lasts.choose(rng).expect("non-empty").clone()]
            }
        })
        .collect();
    let prefixes = ["port", "lake", "mount", "saint", "north", "new"];
    let places: Vec<Vec<String>> = (0..500)
        .map(|_| {
            let name = gen.fresh(rng);
            if rng.gen_bool(0.25) {
                vec![prefixes.choose(rng).expect("non-empty").to_string(), name]
            } else {
                vec![name]
            }
        })
        .collect();
    let artists: Vec<Vec<String>> = (0..300)
        .map(|_| {
            if rng.gen_bool(0.3) {
                vec!["the".to_string(), gen.fresh(rng)]
            } else {
                vec![gen.fresh(rng)]
            }
        })
        .collect();
    let adjs = words(ADJS);
    let nouns = words(NOUNS);
    let songs: Vec<Vec<String>> = (0..500)
        .map(|_| match rng.gen_range(0..4) {
            0 => vec![gen.fresh(rng)],
            1 => vec![adjs.choose(rng).expect("non-empty").to_string(), gen.fresh(rng)],
            2 => vec![
                "the".to_string(),
                adjs.choose(rng).expect("non-empty").to_string(),
                gen.fresh(rng),
            ],
            _ => vec![gen.fresh(rng), nouns.choose(rng).expect("non-empty").to_string()],
        })
        .collect();
    let lex = |entries| Lexicon::new(entries, config.unseen_fraction, config.entity_zipf);
    Lexicons {
        people: lex(people),
        places: lex(places),
        artists: lex(artists),
        songs: lex(songs),
    }
}

/// Zipf-weighted picker over a fixed word list.
struct Picker<'a> {
    items: Vec<&'a str>,
    dist: WeightedIndex<f64>,
}

impl<'a> Picker<'a> {
    fn new(list: &'a str) -> Self {
        let items = words(list);
        let weights: Vec<f64> = (1..=items.len()).map(|r| 1.0 / r as f64).collect();
        Self {
            items,
            dist: WeightedIndex::new(weights).expect("positive weights"),
        }
    }

    fn pick<R: Rng>(&self, rng: &mut R) -> &'a str {
        self.items[self.dist.sample(rng)]
    }
}

struct Fillers<'a> {
    nouns: Picker<'a>,
    verbs: Picker<'a>,
    adjs: Picker<'a>,
    genres: Picker<'a>,
    numbers: Picker<'a>,
    days: Picker<'a>,
    chores: Vec<&'a str>,
}

fn fill<R: Rng>(
    template: &str,
    rng: &mut R,
    f: &Fillers,
    mut entity: impl FnMut(&str, &mut R) -> Vec<String>,
) -> Vec<String> {
    let mut out = Vec::new();
    for tok in template.split_whitespace() {
        match tok {
            "{noun}" => out.push(f.nouns.pick(rng).to_string()),
            "{verb}" => out.push(f.verbs.pick(rng).to_string()),
            "{adj}" => out.push(f.adjs.pick(rng).to_string()),
            "{genre}" => out.push(f.genres.pick(rng).to_string()),
            "{number}" => out.push(f.numbers.pick(rng).to_string()),
            "{day}" => out.push(f.days.pick(rng).to_string()),
            "{chore}" => out.extend(
                f.chores
                    .choose(rng)
                    .expect("non-empty")
                    .split_whitespace()
                    .map(String::from),
            ),
            "{person}" | "{place}" | "{artist}" | "{song}" => out.extend(entity(tok, rng)),
            w => out.push(w.to_string()),
        }
    }
    out
}

struct Grammar<'a> {
    dets: Picker<'a>,
    preps: Picker<'a>,
    subjects: Picker<'a>,
}

fn noun_phrase<R: Rng>(rng: &mut R, f: &Fillers, g: &Grammar, out: &mut Vec<String>) {
    out.push(g.dets.pick(rng).to_string());
    if rng.gen_bool(0.3) {
        out.push(f.adjs.pick(rng).to_string());
    }
    out.push(f.nouns.pick(rng).to_string());
}

fn time_phrase<R: Rng>(rng: &mut R, f: &Fillers, out: &mut Vec<String>) {
    if rng.gen_bool(0.5) {
        out.push(f.days.pick(rng).to_string());
    } else {
        out.push("at".to_string());
        out.push(f.numbers.pick(rng).to_string());
    }
}

/// Free-form chit-chat from a small phrase-structure grammar.
fn chat_sentence<R: Rng>(rng: &mut R, f: &Fillers, g: &Grammar) -> Vec<String> {
    let mut out = Vec::new();
    match rng.gen_range(0..6) {
        0 | 1 => {
            out.push(g.subjects.pick(rng).to_string());
            if rng.gen_bool(0.5) {
                out.extend(
                    AUXES
                        .choose(rng)
                        .expect("non-empty")
                        .split_whitespace()
                        .map(String::from),
                );
            }
            out.push(f.verbs.pick(rng).to_string());
            noun_phrase(rng, f, g, &mut out);
        }
        2 => {
            out.extend(["where", "is"].map(String::from));
            noun_phrase(rng, f, g, &mut out);
        }
        3 => {
            noun_phrase(rng, f, g, &mut out);
            out.push("is".to_string());
            out.push(f.adjs.pick(rng).to_string());
        }
        4 => {
            out.extend(["can", "you"].map(String::from));
            out.push(f.verbs.pick(rng).to_string());
            noun_phrase(rng, f, g, &mut out);
        }
        _ => {
            out.extend(["how", "do", "i"].map(String::from));
            out.push(f.verbs.pick(rng).to_string());
            noun_phrase(rng, f, g, &mut out);
        }
    }
    if rng.gen_bool(0.4) {
        out.push(g.preps.pick(rng).to_string());
        noun_phrase(rng, f, g, &mut out);
    }
    if rng.gen_bool(0.3) {
        time_phrase(rng, f, &mut out);
    }
    out
}

/// Generate the training text and test utterances for `config`.
pub fn generate_desk(config: &DeskConfig) -> DeskCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lex = build_lexicons(&mut rng, config);
    let fillers = Fillers {
        nouns: Picker::new(NOUNS),
        verbs: Picker::new(VERBS),
        adjs: Picker::new(ADJS),
        genres: Picker::new(GENRES),
        numbers: Picker::new(NUMBERS),
        days: Picker::new(DAYS),
        chores: CHORES.to_vec(),
    };
    let grammar = Grammar {
        dets: Picker::new(DETS),
        preps: Picker::new(PREPS),
        subjects: Picker::new(SUBJECTS),
    };
    let pick_lexicon = |slot: &str| match slot {
        "{person}" => &lex.people,
        "{place}" => &lex.places,
        "{artist}" => &lex.artists,
        _ => &lex.songs,
    };
    let mut train = Vec::with_capacity(config.train_sentences);
    for _ in 0..config.train_sentences {
        if rng.gen_bool(config.train_command_share) {
            let template = COMMANDS.choose(&mut rng).expect("non-empty");
            train.push(fill(template, &mut rng, &fillers, |slot, r| {
                pick_lexicon(slot).train_draw(r).to_vec()
            }));
        } else {
            train.push(chat_sentence(&mut rng, &fillers, &grammar));
        }
    }
    let mut test = Vec::with_capacity(config.test_utterances);
    for _ in 0..config.test_utterances {
        if rng.gen_bool(config.test_command_share) {
            let template = COMMANDS.choose(&mut rng).expect("non-empty");
            test.push(fill(template, &mut rng, &fillers, |slot, r| {
                pick_lexicon(slot).test_draw(r, config).to_vec()
            }));
        } else {
            test.push(chat_sentence(&mut rng, &fillers, &grammar));
        }
    }
    DeskCorpus { train, test }
}

const CHORES: [&str; 10] = [
    "buy milk",
    "call back",
    "pay the bill",
    "water the plants",
    "take the bins out",
    "pick up the kids",
    "book a table",
    "walk the dog",
    "clean the kitchen",
    "send the report",
];
