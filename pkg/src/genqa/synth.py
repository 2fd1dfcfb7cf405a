"""Synthetic QA corpus generator.

Builds a world of invented two-token entities with per-predicate value pools,
then renders question/answer pairs from paraphrase templates with the object
embedded verbatim in every answer. Values are drawn from shared pools (not
unique per entity), so a system with no knowledge access still has a
measurable guess rate, and held-out facts keep in-vocabulary surface forms.

Noise perturbs only filler tokens: typos and inserted hedges never touch
subject or object tokens, so grounding stays well-defined while question
surfaces still vary. Everything is deterministic in the seed, including file
bytes.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

_FIRST = [
    "mira", "kato", "odo", "suli", "tano", "pia", "rben", "zefa", "lumo", "dara",
    "ivo", "nela", "orin", "tessa", "malik", "juna", "ravi", "ceda", "bram", "yoko",
    "falk", "neri", "oskar", "vida", "quen", "sanna", "tibor", "ulla", "vern", "wanda",
    "xeno", "yara", "zoltan", "amara", "boris", "cleo", "dmitri", "elena", "farid", "greta",
    "hugo", "ines", "jorik", "kiara", "lars",
]
_LAST = [
    "bel", "ven", "rell", "mar", "vex", "norr", "thane", "kovic", "strand", "mora",
    "falk", "serra", "lund", "petrov", "silva", "novak", "reyes", "koda", "brant", "ek",
    "varga", "holm", "duarte", "ferro", "kuznets", "ahlberg", "moss", "quint", "ryden", "sato",
    "tiller", "unger", "vance", "wilde", "xia", "yount", "zorn", "abt", "bjork", "cruz",
    "dorn", "egger", "frost", "grim", "hale",
]
_CITY_PREFIX = ["port", "north", "south", "east", "west", "new", "old", "lake"]
_CITY_STEM = [
    "arlen", "brav", "corin", "delmar", "esten", "farrow", "gilden", "harlow",
    "istra", "jorvik", "kelso", "lorn",
]
_TEAM_STEM = [
    "aurora", "borealis", "cascade", "drift", "ember", "fjord", "granite", "horizon",
    "ion", "jetstream", "kraken", "lumen", "meridian", "nimbus", "onyx", "pulsar",
    "quartz", "ridge", "summit", "tempest", "umbra", "vortex", "wavelength", "zenith",
    "basalt", "cobalt", "dynamo", "eclipse", "flint", "gale",
]
_PROFESSIONS = [
    "violinist", "goalkeeper", "architect", "surgeon", "astronomer", "blacksmith",
    "cartographer", "drummer", "engineer", "falconer", "geologist", "historian",
    "illustrator", "journalist", "kayaker", "librarian", "machinist", "novelist",
    "oceanographer", "painter", "quarryman", "referee", "sculptor", "translator",
    "umpire", "vintner", "weaver", "zoologist", "barista", "chemist", "diver",
    "editor", "florist", "glassblower", "jeweler", "locksmith", "miller", "notary",
    "organist", "printer",
]
_FILLERS = ["please", "hey", "so", "well", "um"]


@dataclass(frozen=True)
class PredicateSchema:
    """A predicate with its value pool and surface templates."""

    name: str
    values: tuple[str, ...]
    question_templates: tuple[str, ...]
    answer_templates: tuple[str, ...]

    def __post_init__(self):
        if len(self.question_templates) < 3:
            raise ValueError(f"{self.name}: need at least 3 question paraphrases")
        if len(self.answer_templates) < 2:
            raise ValueError(f"{self.name}: need at least 2 answer templates")
        if any("{s}" not in t for t in self.question_templates):
            raise ValueError(f"{self.name}: every question template needs {{s}}")
        if any("{o}" not in t for t in self.answer_templates):
            raise ValueError(f"{self.name}: every answer template needs {{o}}")
        if not self.values:
            raise ValueError(f"{self.name}: empty value pool")


def default_predicates() -> tuple[PredicateSchema, ...]:
    heights = tuple(f"{1.50 + 0.01 * i:.2f}m" for i in range(120))
    years = tuple(str(1900 + i) for i in range(120))
    cities = tuple(f"{p} {s}" for p in _CITY_PREFIX for s in _CITY_STEM)[:80]
    teams = tuple(f"fc {s}" for s in _TEAM_STEM)
    return (
        PredicateSchema(
            name="height",
            values=heights,
            question_templates=(
                "how tall is {s} ?",
                "what is the height of {s} ?",
                "how tall does {s} stand ?",
            ),
            answer_templates=("he is {o} tall .", "{s} stands {o} tall ."),
        ),
        PredicateSchema(
            name="birth year",
            values=years,
            question_templates=(
                "when was {s} born ?",
                "what is the birth year of {s} ?",
                "in what year was {s} born ?",
            ),
            answer_templates=("he was born in {o} .", "{s} was born in the year {o} ."),
        ),
        PredicateSchema(
            name="birth place",
            values=cities,
            question_templates=(
                "where was {s} born ?",
                "what is the birth place of {s} ?",
                "where does {s} come from ?",
            ),
            answer_templates=("he was born in {o} .", "{s} comes from {o} ."),
        ),
        PredicateSchema(
            name="team",
            values=teams,
            question_templates=(
                "which team does {s} play for ?",
                "who does {s} play for ?",
                "where does {s} play these days ?",
            ),
            answer_templates=("he plays for {o} .", "{s} currently plays for {o} ."),
        ),
        PredicateSchema(
            name="profession",
            values=tuple(_PROFESSIONS),
            question_templates=(
                "what does {s} do for a living ?",
                "what is the profession of {s} ?",
                "what kind of work does {s} do ?",
            ),
            answer_templates=("he works as a {o} .", "{s} makes a living as a {o} ."),
        ),
    )


@dataclass(frozen=True)
class SyntheticSpec:
    entities: int = 1000
    predicates: tuple[PredicateSchema, ...] = field(default_factory=default_predicates)
    noise_rate: float = 0.1
    seed: int = 0
    pairs_per_triple: int = 1

    def __post_init__(self):
        if self.entities < 1:
            raise ValueError("need at least one entity")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValueError("noise_rate must lie in [0, 1]")
        if self.entities > len(_FIRST) * len(_LAST):
            raise ValueError(f"at most {len(_FIRST) * len(_LAST)} distinct entities")

    def chance_level(self) -> float:
        """Expected accuracy of guessing a value without consulting facts."""
        return sum(1.0 / len(p.values) for p in self.predicates) / len(self.predicates)


def load_spec(path: str | Path) -> SyntheticSpec:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    preds = tuple(
        PredicateSchema(
            name=p["name"],
            values=tuple(p["values"]),
            question_templates=tuple(p["question_templates"]),
            answer_templates=tuple(p["answer_templates"]),
        )
        for p in raw.get("predicates", [])
    ) or default_predicates()
    return SyntheticSpec(
        entities=raw.get("entities", 1000),
        predicates=preds,
        noise_rate=raw.get("noise_rate", 0.1),
        seed=raw.get("seed", 0),
        pairs_per_triple=raw.get("pairs_per_triple", 1),
    )


def spec_to_dict(spec: SyntheticSpec) -> dict:
    return asdict(spec)


@dataclass
class SyntheticCorpus:
    triples: list[dict]
    qa_pairs: list[dict]
    gold: list[dict]


def _typo(rnd: random.Random, token: str) -> str:
    if len(token) < 3:
        return token + token[-1]
    i = rnd.randrange(len(token) - 1)
    if rnd.random() < 0.5:
        return token[:i] + token[i + 1] + token[i] + token[i + 2 :]
    return token[:i] + token[i + 1 :]


def _render(template: str, subject: str, obj: str | None = None) -> tuple[list[str], tuple[int, int] | None]:
    """Template -> token list, tracking where the object tokens land."""
    tokens: list[str] = []
    span = None
    for part in template.split():
        if part == "{s}":
            tokens.extend(subject.split())
        elif part == "{o}":
            lo = len(tokens)
            tokens.extend(obj.split())
            span = (lo, len(tokens))
        else:
            tokens.append(part)
    return tokens, span


def _protected(subject: str, span: tuple[int, int] | None, tokens: list[str]) -> set[int]:
    keep = set()
    subject_tokens = set(subject.split())
    for i, tok in enumerate(tokens):
        if tok in subject_tokens or not tok.isalpha() or len(tok) < 3:
            keep.add(i)
    if span is not None:
        keep.update(range(span[0], span[1]))
    return keep


def generate(spec: SyntheticSpec) -> SyntheticCorpus:
    """Render the full corpus; every QA pair knows its gold fact and span."""
    rnd = random.Random(spec.seed)
    combos = rnd.sample(range(len(_FIRST) * len(_LAST)), spec.entities)
    entities = [f"{_FIRST[i // len(_LAST)]} {_LAST[i % len(_LAST)]}" for i in combos]

    triples: list[tuple[str, str, str]] = []
    for ent in entities:
        for pred in spec.predicates:
            triples.append((ent, pred.name, rnd.choice(pred.values)))
    rnd.shuffle(triples)
    by_name = {p.name: p for p in spec.predicates}

    qa_pairs: list[dict] = []
    gold: list[dict] = []
    order = list(range(len(triples)))
    for idx in order:
        subject, pred_name, obj = triples[idx]
        pred = by_name[pred_name]
        for _ in range(spec.pairs_per_triple):
            q_tokens, _ = _render(rnd.choice(pred.question_templates), subject)
            a_tokens, span = _render(rnd.choice(pred.answer_templates), subject, obj)
            if rnd.random() < spec.noise_rate:
                kind = rnd.randrange(3)
                if kind == 0:
                    free = [i for i in range(len(q_tokens)) if i not in _protected(subject, None, q_tokens)]
                    if free:
                        i = rnd.choice(free)
                        q_tokens[i] = _typo(rnd, q_tokens[i])
                elif kind == 1:
                    q_tokens.insert(rnd.randrange(len(q_tokens)), rnd.choice(_FILLERS))
                else:
                    free = [i for i in range(len(a_tokens)) if i not in _protected(subject, span, a_tokens)]
                    if free:
                        i = rnd.choice(free)
                        a_tokens[i] = _typo(rnd, a_tokens[i])
            question = " ".join(q_tokens)
            answer = " ".join(a_tokens)
            qa_pairs.append({"question": question, "answer": answer})
            gold.append(
                {
                    "question": question,
                    "answer": answer,
                    "triple": {"subject": subject, "predicate": pred_name, "object": obj},
                    "object_span": [span[0], span[1]],
                }
            )
    pair_order = list(range(len(qa_pairs)))
    rnd.shuffle(pair_order)
    return SyntheticCorpus(
        triples=[
            {"subject": s, "predicate": p, "object": o} for s, p, o in triples
        ],
        qa_pairs=[qa_pairs[i] for i in pair_order],
        gold=[gold[i] for i in pair_order],
    )


def write_corpus(corpus: SyntheticCorpus, out_dir: str | Path) -> dict[str, Path]:
    """Write triples/qa/gold JSONL files; byte-deterministic given the corpus."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "triples": out / "triples.jsonl",
        "qa": out / "qa.jsonl",
        "gold": out / "gold.jsonl",
    }
    for key, rows in (("triples", corpus.triples), ("qa", corpus.qa_pairs), ("gold", corpus.gold)):
        tmp = paths[key].with_name(paths[key].name + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        tmp.replace(paths[key])
    return paths
