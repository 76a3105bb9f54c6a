//! The 41 relation labels of the T-REx knowledge-probe corpus with a cloze
//! template per label (`[X]` subject, `[Y]` object).

pub const TREX_RELATIONS: [(&str, &str); 41] = [
    ("P19", "[X] was born in [Y]."),
    ("P20", "[X] died in [Y]."),
    ("P279", "[X] is a subclass of [Y]."),
    ("P37", "The official language of [X] is [Y]."),
    ("P413", "[X] plays in [Y] position."),
    ("P449", "[X] was originally aired on [Y]."),
    ("P47", "[X] shares border with [Y]."),
    ("P138", "[X] is named after [Y]."),
    ("P364", "The original language of [X] is [Y]."),
    ("P463", "[X] is a member of [Y]."),
    ("P101", "[X] works in the field of [Y]."),
    ("P106", "[X] is a [Y] by profession."),
    ("P527", "[X] consists of [Y]."),
    ("P530", "[X] maintains diplomatic relations with [Y]."),
    ("P176", "[X] is produced by [Y]."),
    ("P27", "[X] is a citizen of [Y]."),
    ("P407", "[X] was written in [Y]."),
    ("P30", "[X] is located in [Y]."),
    ("P178", "[X] is developed by [Y]."),
    ("P1376", "[X] is the capital of [Y]."),
    ("P131", "[X] is located in [Y]."),
    ("P1412", "[X] used to communicate in [Y]."),
    ("P108", "[X] works for [Y]."),
    ("P136", "[X] plays [Y] music."),
    ("P17", "[X] is located in [Y]."),
    ("P39", "[X] has the position of [Y]."),
    ("P264", "[X] is represented by music label [Y]."),
    ("P276", "[X] is located in [Y]."),
    ("P937", "[X] used to work in [Y]."),
    ("P140", "[X] is affiliated with the [Y] religion."),
    ("P1303", "[X] plays [Y]."),
    ("P127", "[X] is owned by [Y]."),
    ("P103", "The native language of [X] is [Y]."),
    ("P190", "[X] and [Y] are twin cities."),
    ("P1001", "[X] is a legal term in [Y]."),
    ("P31", "[X] is a [Y]."),
    ("P495", "[X] was created in [Y]."),
    ("P159", "The headquarters of [X] is in [Y]."),
    ("P36", "The capital of [X] is [Y]."),
    ("P740", "[X] was founded in [Y]."),
    ("P361", "[X] is part of [Y]."),
];

pub fn labels() -> impl Iterator<Item = &'static str> {
    TREX_RELATIONS.iter().map(|(label, _)| *label)
}

pub fn template(label: &str) -> Option<&'static str> {
    TREX_RELATIONS.iter().find(|(l, _)| *l == label).map(|(_, t)| *t)
}

/// Fills a cloze template with a subject and an object.
pub fn fill(template: &str, subject: &str, object: &str) -> String {
    template.replace("[X]", subject).replace("[Y]", object)
}
