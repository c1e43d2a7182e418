//! Deterministic synthetic stories.
//!
//! `battle` and `romance` are hand-authored stories with known structure;
//! `noise` is a seeded random story whose label variation and
//! reading/storytime divergence grow with `variance`.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotation::{
    panel_id, ActionAnn, AnnotationDoc, CharacterAnn, DialogueAnn, EventAnn, MacroEventAnn,
    ObjectAnn, PanelAnn, SCHEMA_VERSION,
};
use crate::eval::GoldLabelFile;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FixtureKind {
    Battle,
    Romance,
    Noise { seed: u64, variance: f64 },
}

impl FixtureKind {
    pub fn name(&self) -> &'static str {
        match self {
            FixtureKind::Battle => "battle",
            FixtureKind::Romance => "romance",
            FixtureKind::Noise { .. } => "noise",
        }
    }
}

impl FromStr for FixtureKind {
    type Err = String;

    /// `battle`, `romance`, `noise`, or `noise:<seed>[:<variance>]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        match parts.next() {
            Some("battle") => Ok(FixtureKind::Battle),
            Some("romance") => Ok(FixtureKind::Romance),
            Some("noise") => {
                let seed = parts
                    .next()
                    .map(|v| v.parse().map_err(|_| format!("bad seed `{v}`")))
                    .transpose()?
                    .unwrap_or(0);
                let variance = parts
                    .next()
                    .map(|v| v.parse().map_err(|_| format!("bad variance `{v}`")))
                    .transpose()?
                    .unwrap_or(0.3);
                Ok(FixtureKind::Noise { seed, variance })
            }
            _ => Err(format!("unknown fixture kind `{s}`")),
        }
    }
}

pub fn generate_fixture(kind: FixtureKind) -> AnnotationDoc {
    match kind {
        FixtureKind::Battle => battle(),
        FixtureKind::Romance => romance(),
        FixtureKind::Noise { seed, variance } => noise(seed, variance),
    }
}

/// Gold action clusters that accompany each fixture.
pub fn fixture_gold(kind: FixtureKind) -> GoldLabelFile {
    let clusters: &[(&str, &[&str])] = match kind {
        FixtureKind::Battle => &[("attack", &["attack", "fight", "strike", "hit"])],
        FixtureKind::Romance => &[
            ("read", &["read", "reads", "reading"]),
            ("insert", &["insert"]),
            ("insert_into", &["insert_into"]),
        ],
        FixtureKind::Noise { .. } => &[],
    };
    GoldLabelFile {
        action_clusters: clusters
            .iter()
            .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
            .collect(),
        event_labels: Vec::new(),
    }
}

struct Panel {
    inner: PanelAnn,
}

impl Panel {
    fn new() -> Self {
        Panel {
            inner: PanelAnn {
                id: String::new(),
                characters: Vec::new(),
                objects: Vec::new(),
                actions: Vec::new(),
                dialogues: Vec::new(),
                captions: Vec::new(),
                reading_order: 0,
                storytime_order: 0,
            },
        }
    }

    fn who(mut self, instance: &str, entity: &str, name: &str) -> Self {
        self.inner.characters.push(CharacterAnn {
            instance_id: instance.into(),
            entity_id: entity.into(),
            name: name.into(),
        });
        self
    }

    fn object(mut self, instance: &str, label: &str) -> Self {
        self.inner.objects.push(ObjectAnn {
            instance_id: instance.into(),
            label: label.into(),
        });
        self
    }

    fn act(mut self, instance: &str, label: &str, agent: Option<&str>, target: Option<&str>) -> Self {
        self.inner.actions.push(ActionAnn {
            instance_id: instance.into(),
            label: label.into(),
            agent: agent.map(Into::into),
            target: target.map(Into::into),
        });
        self
    }

    fn say(mut self, instance: &str, speaker: Option<&str>, text: &str) -> Self {
        self.inner.dialogues.push(DialogueAnn {
            instance_id: instance.into(),
            speaker: speaker.map(Into::into),
            text: text.into(),
        });
        self
    }

    fn caption(mut self, text: &str) -> Self {
        self.inner.captions.push(text.into());
        self
    }
}

/// Appends tiers in order and assigns ids and reading order by position.
struct Story {
    doc: AnnotationDoc,
    next_order: u32,
}

impl Story {
    fn new(story_id: &str) -> Self {
        Story {
            doc: AnnotationDoc {
                schema_version: SCHEMA_VERSION,
                story_id: story_id.into(),
                macro_events: Vec::new(),
            },
            next_order: 0,
        }
    }

    fn macro_event(&mut self, id: &str, label: &str) -> &mut Self {
        self.doc.macro_events.push(MacroEventAnn {
            id: id.into(),
            label: label.into(),
            events: Vec::new(),
        });
        self
    }

    fn event(&mut self, id: &str, label: &str) -> &mut Self {
        let m = self.doc.macro_events.last_mut().expect("macro-event first");
        m.events.push(EventAnn {
            id: id.into(),
            label: label.into(),
            panels: Vec::new(),
        });
        self
    }

    fn panel(&mut self, panel: Panel) -> &mut Self {
        let mi = self.doc.macro_events.len() - 1;
        let m = self.doc.macro_events.last_mut().expect("macro-event first");
        let ei = m.events.len() - 1;
        let e = m.events.last_mut().expect("event first");
        let mut p = panel.inner;
        p.id = panel_id(mi, ei, e.panels.len());
        p.reading_order = self.next_order;
        p.storytime_order = self.next_order;
        self.next_order += 1;
        e.panels.push(p);
        self
    }

    /// Move the given panels to the start of story time, keeping the
    /// relative order of everything else.
    fn flashback(&mut self, ids: &[&str]) {
        let mut all: Vec<(u32, String)> = self
            .doc
            .panels()
            .map(|(_, _, p)| (p.storytime_order, p.id.clone()))
            .collect();
        all.sort();
        let mut order: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
        order.extend(all.into_iter().map(|(_, id)| id).filter(|id| !ids.contains(&id.as_str())));
        let rank: BTreeMap<String, u32> = order
            .into_iter()
            .enumerate()
            .map(|(i, id)| (id, i as u32))
            .collect();
        for m in &mut self.doc.macro_events {
            for e in &mut m.events {
                for p in &mut e.panels {
                    p.storytime_order = rank[&p.id];
                }
            }
        }
    }

    fn finish(self) -> AnnotationDoc {
        self.doc
    }
}

fn battle() -> AnnotationDoc {
    let ren = ("ren", "charA", "Ren");
    let mika = ("mika", "charB", "Mika");
    let beast = ("beast", "monster", "Forest Lord");
    let elder = ("elder", "elder", "Elder");
    let driver = ("driver", "driver", "Cart Driver");
    let p = Panel::new;
    let with = |panel: Panel, c: (&str, &str, &str)| panel.who(c.0, c.1, c.2);

    let mut s = Story::new("battle_story");
    s.macro_event("m0", "Intro to timeline")
        .event("e0_0", "Ancient era")
        .panel(
            with(p(), elder)
                .caption("Long ago...")
                .act("a0", "gesture", Some("elder"), None)
                .say("d0", Some("elder"), "Long ago, monsters roamed this land."),
        )
        .panel(with(p(), elder).object("o0", "scroll").act("a0", "point", Some("elder"), Some("o0")))
        .event("e0_1", "Sealing of monsters")
        .panel(with(p(), elder).act("a0", "pray", Some("elder"), None))
        .panel(
            with(p(), elder)
                .object("o0", "shrine")
                .act("a0", "seal", Some("elder"), Some("o0")),
        )
        .panel(p().caption("The seal held for a thousand years."))
        .event("e0_2", "Present day")
        .panel(with(p(), elder).act("a0", "sweep", Some("elder"), None))
        .panel(with(p(), elder).act("a0", "sigh", Some("elder"), None))
        .panel(
            with(p(), elder)
                .act("a0", "rest", Some("elder"), None)
                .say("d0", Some("elder"), "The seal grows weak."),
        )
        .panel(p().caption("Present day."));

    s.macro_event("m1", "Intro main character")
        .event("e1_0", "Morning training")
        .panel(
            with(p(), ren)
                .act("a0", "stretch", Some("ren"), None)
                .say("d0", Some("ren"), "Another day of training!"),
        )
        .panel(with(p(), ren).act("a0", "run", Some("ren"), None))
        .panel(with(p(), ren).act("a0", "jump", Some("ren"), None))
        .event("e1_1", "Village errand")
        .panel(
            with(p(), ren)
                .object("o0", "basket")
                .act("a0", "carry", Some("ren"), Some("o0")),
        )
        .panel(
            with(with(p(), ren), elder)
                .act("a0", "greet", Some("ren"), Some("elder"))
                .say("d0", Some("elder"), "Good morning, Ren."),
        )
        .panel(with(p(), ren).act("a0", "smile", Some("ren"), None));

    s.macro_event("m2", "Intro second character")
        .event("e2_0", "Swordsmith shop")
        .panel(
            with(p(), mika)
                .object("o0", "blade")
                .act("a0", "forge", Some("mika"), Some("o0")),
        )
        .panel(
            with(p(), mika)
                .act("a0", "polish", Some("mika"), None)
                .say("d0", Some("mika"), "Almost ready."),
        )
        .event("e2_1", "Leave shop")
        .panel(
            with(p(), mika)
                .object("o0", "door")
                .act("a0", "open", Some("mika"), Some("o0")),
        )
        .panel(with(p(), mika).act("a0", "depart", Some("mika"), None));

    s.macro_event("m3", "Monster intro")
        .event("e3_0", "Monster intro")
        .panel(
            with(with(p(), beast), mika)
                .act("a0", "appear", Some("beast"), None)
                .say("d0", Some("beast"), "Who dares enter my forest?")
                .say("d1", Some("mika"), "A monster!"),
        )
        .panel(with(p(), beast).say("d0", Some("beast"), "Leave, or be devoured."))
        .panel(
            with(with(p(), mika), beast)
                .act("a0", "fight", Some("mika"), Some("beast"))
                .say("d0", Some("mika"), "I will not run."),
        )
        .event("e3_1", "Monster roars")
        .panel(with(p(), beast).act("a0", "roar", Some("beast"), None))
        .panel(with(p(), mika).act("a0", "tremble", Some("mika"), None));

    s.macro_event("m4", "Street accident")
        .event("e4_0", "Cart crash")
        .panel(
            with(with(p(), driver), mika)
                .object("o0", "cart")
                .act("a0", "hit", Some("driver"), Some("mika")),
        )
        .panel(with(p(), mika).act("a0", "fall", Some("mika"), None))
        .event("e4_1", "Aftermath")
        .panel(
            with(with(p(), driver), mika)
                .act("a0", "apologize", Some("driver"), Some("mika"))
                .say("d0", Some("driver"), "Sorry! I could not stop."),
        )
        .panel(
            with(p(), mika)
                .act("a0", "bandage", Some("mika"), None)
                .say("d0", Some("mika"), "I am fine."),
        );

    s.macro_event("m5", "Meet characters")
        .event("e5_0", "First meeting")
        .panel(
            with(with(p(), ren), mika)
                .act("a0", "bow", Some("ren"), Some("mika"))
                .say("d0", Some("ren"), "Are you hurt?"),
        )
        .panel(
            with(with(p(), ren), mika)
                .act("a0", "talk", Some("mika"), Some("ren"))
                .say("d0", Some("mika"), "Only my pride."),
        )
        .panel(with(p(), ren).act("a0", "laugh", Some("ren"), None))
        .event("e5_1", "Shared meal")
        .panel(
            with(with(p(), ren), mika)
                .object("o0", "bowl")
                .act("a0", "eat", Some("ren"), Some("o0")),
        )
        .panel(with(p(), ren).act("a0", "drink", Some("ren"), None))
        .panel(
            with(with(p(), ren), mika)
                .act("a0", "nod", Some("mika"), None)
                .say("d0", Some("ren"), "Let us travel together."),
        );

    s.macro_event("m6", "Formal monster intro")
        .event("e6_0", "Monster returns")
        .panel(
            with(with(p(), beast), mika)
                .act("a0", "strike", Some("beast"), Some("mika")),
        )
        .panel(with(p(), mika).act("a0", "dodge", Some("mika"), None))
        .event("e6_1", "Name declared")
        .panel(
            with(p(), beast)
                .act("a0", "declare", Some("beast"), None)
                .say("d0", Some("beast"), "I am the Forest Lord."),
        )
        .panel(with(p(), mika).act("a0", "kneel", Some("mika"), None));

    s.finish()
}

fn romance() -> AnnotationDoc {
    let yui = ("yui", "heroine", "Yui");
    let mom = ("mom", "mother", "Mother");
    let dad = ("dad", "father", "Father");
    let post = ("post", "postman", "Postman");
    let p = Panel::new;
    let with = |panel: Panel, c: (&str, &str, &str)| panel.who(c.0, c.1, c.2);

    let mut s = Story::new("romance_story");
    s.macro_event("m0", "Message from family")
        .event("e0_0", "Intro")
        .panel(with(p(), yui).caption("Tokyo, spring.").act("a0", "wake", Some("yui"), None))
        .panel(
            with(p(), yui)
                .act("a0", "yawn", Some("yui"), None)
                .say("d0", Some("yui"), "Another quiet morning."),
        )
        .event("e0_1", "Receive letter")
        .panel(with(p(), post).act("a0", "knock", Some("post"), None))
        .panel(
            with(with(p(), post), yui)
                .object("o0", "letter")
                .act("a0", "receive", Some("yui"), Some("o0"))
                .say("d0", Some("post"), "A letter for you."),
        )
        .panel(
            with(p(), yui)
                .object("o0", "envelope")
                .act("a0", "open", Some("yui"), Some("o0")),
        )
        .event("e0_2", "Read letter")
        .panel(
            with(p(), yui)
                .object("o0", "letter")
                .act("a0", "reads", Some("yui"), Some("o0"))
                .say("d0", Some("yui"), "It's from Mom."),
        )
        .panel(with(p(), yui).act("a0", "reading", Some("yui"), None))
        .panel(with(p(), yui).act("a0", "smile", Some("yui"), None));

    s.macro_event("m1", "Shock by message")
        .event("e1_0", "Bad news")
        .panel(
            with(p(), yui)
                .act("a0", "gasp", Some("yui"), None)
                .say("d0", Some("yui"), "Dad is in the hospital?"),
        )
        .panel(
            with(p(), yui)
                .object("o0", "letter")
                .act("a0", "drop", Some("yui"), Some("o0")),
        )
        .event("e1_1", "Tears")
        .panel(with(p(), yui).act("a0", "cry", Some("yui"), None))
        .panel(
            with(p(), yui)
                .act("a0", "wipe_tears", Some("yui"), None)
                .say("d0", Some("yui"), "I should call home."),
        );

    s.macro_event("m2", "Think of family")
        .event("e2_0", "Intro")
        .panel(with(p(), yui).act("a0", "sit", Some("yui"), None))
        .panel(
            with(p(), yui)
                .act("a0", "sigh", Some("yui"), None)
                .say("d0", Some("yui"), "I miss home cooking."),
        )
        .event("e2_1", "Get new rice cooker")
        .panel(
            with(p(), yui)
                .object("o0", "rice_cooker")
                .act("a0", "buy", Some("yui"), Some("o0")),
        )
        .panel(
            with(p(), yui)
                .object("o0", "box")
                .act("a0", "carry", Some("yui"), Some("o0")),
        )
        .event("e2_2", "Test new rice cooker")
        .panel(
            with(p(), yui)
                .object("o0", "rice")
                .act("a0", "insert", Some("yui"), Some("o0")),
        )
        .panel(
            with(p(), yui)
                .object("o0", "water")
                .act("a0", "insert", Some("yui"), Some("o0")),
        )
        .panel(
            with(p(), yui)
                .object("o0", "plug")
                .act("a0", "insert_into", Some("yui"), Some("o0"))
                .act("a1", "press", Some("yui"), None)
                .say("d0", Some("yui"), "Let's see if it works."),
        )
        .event("e2_3", "Eat and think of family")
        .panel(
            with(p(), yui)
                .object("o0", "rice")
                .act("a0", "eat", Some("yui"), Some("o0")),
        )
        .panel(
            with(with(with(p(), yui), mom), dad)
                .caption("Years ago.")
                .act("a0", "cook", Some("mom"), None)
                .say("d0", Some("mom"), "Dinner is ready!"),
        )
        .panel(
            with(with(p(), mom), dad)
                .act("a0", "laugh", Some("dad"), None)
                .say("d0", Some("dad"), "Your mother's rice is the best."),
        )
        .panel(
            with(p(), yui)
                .act("a0", "think", Some("yui"), None)
                .say("d0", Some("yui"), "I will visit them soon."),
        );

    s.flashback(&["2_3_1", "2_3_2"]);
    s.finish()
}

const NOISE_VERBS: &[&[&str]] = &[
    &["attack", "attacks", "attacking", "strike", "hit"],
    &["run", "runs", "running", "dash"],
    &["look", "looks", "looking", "gaze"],
    &["walk", "walks", "walked", "stroll"],
    &["eat", "eats", "eating", "devour"],
    &["open", "opens", "opened"],
    &["jump", "jumps", "jumping"],
    &["cry", "cries", "weep"],
];

const NOISE_WORDS: &[&str] = &[
    "the", "night", "is", "long", "we", "must", "go", "now", "wait", "for", "me", "look", "out",
];

fn noise(seed: u64, variance: f64) -> AnnotationDoc {
    let variance = variance.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Story::new(&format!("noise_{seed}"));
    let cast = [("c0", "hero"), ("c1", "rival"), ("c2", "sage"), ("c3", "child")];

    let macros = rng.random_range(2..=4);
    for mi in 0..macros {
        s.macro_event(&format!("m{mi}"), &format!("Arc {mi}"));
        let events = rng.random_range(1..=3);
        for ei in 0..events {
            s.event(&format!("e{mi}_{ei}"), &format!("Scene {mi}.{ei}"));
            let panels = rng.random_range(1..=4);
            for pi in 0..panels {
                let mut panel = Panel::new();
                let present = rng.random_range(1..=3usize);
                let mut chosen: Vec<usize> = (0..cast.len()).collect();
                chosen.sort_by_key(|_| rng.random::<u32>());
                chosen.truncate(present);
                chosen.sort();
                for &ci in &chosen {
                    let (inst, entity) = cast[ci];
                    panel = panel.who(inst, entity, entity);
                }
                let speakers: Vec<&str> = chosen.iter().map(|&ci| cast[ci].0).collect();
                for ai in 0..rng.random_range(0..=2) {
                    let family = NOISE_VERBS.choose(&mut rng).expect("nonempty");
                    let label = if rng.random_bool(variance) {
                        family.choose(&mut rng).expect("nonempty")
                    } else {
                        family[0]
                    };
                    let agent = speakers.choose(&mut rng).copied();
                    panel = panel.act(&format!("a{ai}"), label, agent, None);
                }
                let lines = if ei == 0 && pi == 0 { 1 } else { rng.random_range(0..=2) };
                for di in 0..lines {
                    let words = rng.random_range(2..=6);
                    let text: Vec<&str> = (0..words)
                        .map(|_| *NOISE_WORDS.choose(&mut rng).expect("nonempty"))
                        .collect();
                    let speaker = speakers.choose(&mut rng).copied();
                    panel = panel.say(&format!("d{di}"), speaker, &text.join(" "));
                }
                s.panel(panel);
            }
        }
    }

    // Story time diverges from reading order by random transpositions.
    let n = s.next_order as usize;
    let mut storytime: Vec<u32> = (0..n as u32).collect();
    for i in 0..n {
        if rng.random_bool(variance) {
            let j = rng.random_range(0..n);
            storytime.swap(i, j);
        }
    }
    for m in &mut s.doc.macro_events {
        for e in &mut m.events {
            for p in &mut e.panels {
                p.storytime_order = storytime[p.reading_order as usize];
            }
        }
    }
    s.finish()
}
