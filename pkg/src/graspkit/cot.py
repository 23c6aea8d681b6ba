"""Physical-property CoT question-answer templates and descriptor libraries.

The reasoning chain has three stages: target parsing ("which objects"),
property analysis (material / surface / shape, three characteristics each),
and grasp action selection. Answers are fill-in-the-blank templates whose
descriptor blanks are "reasoning" slots: they carry zero supervision weight
so a downstream learner is free to resolve them from its own knowledge,
while the fixed template text and the target/count slots stay fully
supervised.

Supervision masks are defined over whitespace-and-punctuation word tokens of
the rendered answer; character spans for every slot are emitted alongside so
any real tokenizer can remap the mask.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .errors import (
    EmptyTargetsError,
    ParseError,
    UnknownDescriptorError,
)

__all__ = [
    "DescriptorLibrary",
    "Slot",
    "QARecord",
    "Instruction",
    "InstructionCheck",
    "ParsedAnswer",
    "default_library",
    "build_target_qa",
    "build_property_qa",
    "build_action_qa",
    "build_cot_sequence",
    "parse_answer",
    "build_instruction_prompt",
    "validate_instruction",
]

STAGE_TARGET = "target_parsing"
STAGE_PROPERTY = "property_analysis"
STAGE_ACTION = "action_selection"

PROPERTY_GROUPS = ("material", "surface", "shape")
_REQUIRED_CHARACTERISTICS = {
    "material": ("hardness", "strength", "elasticity"),
    "surface": ("texture", "roughness", "friction"),
}

_WORD = re.compile(r"\w+")
_DESCRIPTOR_OK = re.compile(r"^[a-z][a-z0-9_-]*$")


@dataclass(frozen=True)
class DescriptorLibrary:
    """Open-world descriptor vocabulary for properties and grasp verbs.

    physical maps group -> characteristic -> descriptor tuple; material and
    surface characteristics are fixed, shape carries exactly three
    toolkit-convention characteristics. Every descriptor is a nonempty
    lowercase token without whitespace.
    """

    physical: Mapping[str, Mapping[str, Tuple[str, ...]]]
    actions: Tuple[str, ...]

    def __post_init__(self):
        phys = {}
        if set(self.physical) != set(PROPERTY_GROUPS):
            raise ValueError(f"property groups must be exactly {PROPERTY_GROUPS}")
        for group, chars in self.physical.items():
            fixed = _REQUIRED_CHARACTERISTICS.get(group)
            if fixed is not None and tuple(chars) != fixed:
                raise ValueError(f"{group} characteristics must be exactly {fixed}")
            if len(chars) != 3:
                raise ValueError(f"{group} must have exactly three characteristics")
            phys[group] = {c: tuple(ds) for c, ds in chars.items()}
        for words in [self.actions] + [d for c in phys.values() for d in c.values()]:
            for w in words:
                if not _DESCRIPTOR_OK.match(w):
                    raise ValueError(
                        f"descriptor {w!r} must be nonempty lowercase without whitespace"
                    )
        object.__setattr__(self, "physical", phys)
        object.__setattr__(self, "actions", tuple(self.actions))

    def characteristics(self, group: str) -> Tuple[str, ...]:
        return tuple(self.physical[group])

    def descriptors(self, group: str, characteristic: str) -> Tuple[str, ...]:
        return self.physical[group][characteristic]

    def find_characteristic(self, characteristic: str) -> Optional[str]:
        """Group owning a characteristic name, or None."""
        for group, chars in self.physical.items():
            if characteristic in chars:
                return group
        return None

    def knows_physical(self, characteristic: str, descriptor: str) -> bool:
        group = self.find_characteristic(characteristic)
        return group is not None and descriptor in self.physical[group][characteristic]

    def with_physical(self, group: str, characteristic: str, *descriptors: str
                      ) -> "DescriptorLibrary":
        """Extended copy; the open-world growth path."""
        phys = {g: dict(c) for g, c in self.physical.items()}
        merged = list(phys[group][characteristic])
        merged.extend(d for d in descriptors if d not in merged)
        phys[group][characteristic] = tuple(merged)
        return DescriptorLibrary(physical=phys, actions=self.actions)

    def with_actions(self, *verbs: str) -> "DescriptorLibrary":
        merged = list(self.actions)
        merged.extend(v for v in verbs if v not in merged)
        return DescriptorLibrary(physical=self.physical, actions=tuple(merged))


def default_library() -> DescriptorLibrary:
    """The shipped vocabulary.

    Material and surface descriptors follow the published option lists and
    worked examples; the three shape characteristics (geometry, size,
    symmetry) and their seeds are a toolkit convention, since only the group
    name is fixed upstream. All lists are open-ended by design: extend with
    with_physical / with_actions rather than editing here.
    """
    return DescriptorLibrary(
        physical={
            "material": {
                "hardness": ("soft", "hard", "rigid", "flexible"),
                "strength": ("brittle", "ductile", "tough"),
                "elasticity": ("elastic", "viscoelastic", "inflexible"),
            },
            "surface": {
                "texture": ("smooth", "rough", "textured"),
                "roughness": ("polished", "matte", "coarse"),
                "friction": ("slippery", "grippy", "sticky"),
            },
            "shape": {
                "geometry": ("cylindrical", "spherical", "flat", "elongated", "irregular"),
                "size": ("small", "medium", "large"),
                "symmetry": ("symmetric", "asymmetric", "radial"),
            },
        },
        actions=("clamp", "pinch", "snap", "pluck", "lift", "grip"),
    )


@dataclass(frozen=True)
class Slot:
    """One template blank: a name, a kind, and an optional filled value."""

    name: str
    kind: str  # object | count | phy_descriptor | act_descriptor
    value: Optional[str] = None

    @property
    def supervised(self) -> bool:
        return self.kind in ("object", "count")


@dataclass(frozen=True)
class QARecord:
    """A question plus a slotted answer template and its supervision mask."""

    stage: str
    question: str
    answer_template: str
    slots: Tuple[Slot, ...]

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        names = [s.name for s in self.slots]
        if len(set(names)) != len(names):
            raise ValueError("slot names must be unique")
        for s in self.slots:
            if f"<{s.name}>" not in self.answer_template:
                raise ValueError(f"template is missing the <{s.name}> marker")

    def fill(self, values: Mapping[str, str]) -> "QARecord":
        """Copy with the given slot values set."""
        known = {s.name for s in self.slots}
        unknown = set(values) - known
        if unknown:
            raise KeyError(f"unknown slots: {sorted(unknown)}")
        slots = tuple(
            replace(s, value=values.get(s.name, s.value)) for s in self.slots
        )
        return replace(self, slots=slots)

    def render(self) -> str:
        """The answer text; unfilled slots keep their literal <name> markers."""
        out = self.answer_template
        for s in self.slots:
            if s.value is not None:
                out = out.replace(f"<{s.name}>", s.value)
        return out

    def slot_spans(self) -> Tuple[Tuple[str, int, int], ...]:
        """(slot_name, start, end) character spans within render()."""
        spans = []
        rendered = []
        pos = 0
        template = self.answer_template
        by_marker = {f"<{s.name}>": s for s in self.slots}
        pattern = re.compile("|".join(re.escape(m) for m in by_marker))
        cursor = 0
        for m in pattern.finditer(template):
            rendered.append(template[cursor:m.start()])
            pos += m.start() - cursor
            slot = by_marker[m.group(0)]
            text = slot.value if slot.value is not None else m.group(0)
            spans.append((slot.name, pos, pos + len(text)))
            rendered.append(text)
            pos += len(text)
            cursor = m.end()
        return tuple(spans)

    def tokens(self) -> Tuple[Tuple[str, int, int], ...]:
        """(word, start, end) for each word token of the rendered answer."""
        return tuple((m.group(0), m.start(), m.end())
                     for m in _WORD.finditer(self.render()))

    def supervision(self) -> Tuple[float, ...]:
        """Per-token weights: 0 inside descriptor slots, 1 everywhere else."""
        zero_spans = [
            (start, end)
            for (name, start, end), slot in zip(self.slot_spans(), self.slots)
            if not slot.supervised
        ]
        weights = []
        for _, t0, t1 in self.tokens():
            masked = any(t0 < e and s < t1 for s, e in zero_spans)
            weights.append(0.0 if masked else 1.0)
        return tuple(weights)

    def zero_weight_slot_count(self) -> int:
        return sum(1 for s in self.slots if not s.supervised)

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "question": self.question,
            "answer_template": self.answer_template,
            "slots": [
                {"name": s.name, "kind": s.kind, "value": s.value}
                for s in self.slots
            ],
            "supervision": list(self.supervision()),
            "char_spans": [[start, end] for _, start, end in self.slot_spans()],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "QARecord":
        return cls(
            stage=obj["stage"],
            question=obj["question"],
            answer_template=obj["answer_template"],
            slots=tuple(
                Slot(s["name"], s["kind"], s.get("value")) for s in obj["slots"]
            ),
        )


@dataclass(frozen=True)
class Instruction:
    """A flexible request plus its hidden ground-truth targets."""

    text: str
    scene_id: str
    target_names: Tuple[str, ...]

    def __post_init__(self):
        if not self.text:
            raise ValueError("instruction text must be nonempty")
        targets = tuple(self.target_names)
        if not targets or any(not t for t in targets):
            raise ValueError("target_names must be nonempty strings")
        object.__setattr__(self, "target_names", targets)


@dataclass(frozen=True)
class InstructionCheck:
    accepted: bool
    reason: Optional[str] = None


@dataclass(frozen=True)
class ParsedAnswer:
    """Slot values recovered from an answer string."""

    values: Dict[str, str]
    unresolved: Tuple[str, ...]
    novel: Tuple[str, ...]


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def _options(words: Sequence[str]) -> str:
    return f"[options: {', '.join(words)}, etc.]"


def build_target_qa(targets: Sequence[str]) -> QARecord:
    """Stage-1 record listing the objects to grasp; fully supervised."""
    targets = list(targets)
    if not targets:
        raise EmptyTargetsError("target parsing needs at least one object")
    markers = ", ".join(f"<obj_{i + 1}>" for i in range(len(targets)))
    slots = [Slot(f"obj_{i + 1}", "object", t) for i, t in enumerate(targets)]
    slots.append(Slot("count", "count", str(len(targets))))
    return QARecord(
        stage=STAGE_TARGET,
        question="Which objects need to be grasped?",
        answer_template=f"[{markers}]. Total <count>.",
        slots=tuple(slots),
    )


def build_property_qa(
    object_name: str,
    group: str,
    library: Optional[DescriptorLibrary] = None,
) -> QARecord:
    """Stage-2 record for one object and one property group.

    The three characteristic blanks are reasoning slots (zero supervision).
    """
    lib = library or default_library()
    if group not in PROPERTY_GROUPS:
        raise ValueError(f"group must be one of {PROPERTY_GROUPS}, got {group!r}")
    chars = lib.characteristics(group)
    aspects = ", ".join(
        f"{c} {_options(lib.descriptors(group, c))}" for c in chars[:-1]
    )
    question = (
        f"For each target object, analyze its {group} from three aspects: "
        f"{aspects}, and {chars[-1]} {_options(lib.descriptors(group, chars[-1]))}."
    )
    answers = ", ".join(f"<{c}> ({c})" for c in chars[:-1])
    template = (
        f"The {group} properties of <object> are {answers}, "
        f"and <{chars[-1]}> ({chars[-1]})."
    )
    slots = [Slot("object", "object", object_name)]
    slots.extend(Slot(c, "phy_descriptor") for c in chars)
    return QARecord(
        stage=STAGE_PROPERTY,
        question=question,
        answer_template=template,
        slots=tuple(slots),
    )


def build_action_qa(
    object_name: str,
    library: Optional[DescriptorLibrary] = None,
) -> QARecord:
    """Stage-3 record selecting the grasp verb; the verb is a reasoning slot."""
    if not object_name:
        raise ValueError("object_name must be nonempty")
    lib = library or default_library()
    return QARecord(
        stage=STAGE_ACTION,
        question=(
            "For each target object, select an appropriate grasp action "
            f"{_options(lib.actions)}."
        ),
        answer_template="The appropriate verb to grasp the <object> is <action>.",
        slots=(Slot("object", "object", object_name), Slot("action", "act_descriptor")),
    )


def build_cot_sequence(
    targets: Sequence[str],
    library: Optional[DescriptorLibrary] = None,
) -> List[QARecord]:
    """The full chain: 1 target record, 3 property records and 1 action
    record per target, in stage order (1 + 4k records for k targets)."""
    targets = list(targets)
    if not targets:
        raise EmptyTargetsError("CoT sequence needs at least one target")
    lib = library or default_library()
    records = [build_target_qa(targets)]
    for t in targets:
        for group in PROPERTY_GROUPS:
            records.append(build_property_qa(t, group, lib))
    for t in targets:
        records.append(build_action_qa(t, lib))
    return records


# ---------------------------------------------------------------------------
# Parsing and validation
# ---------------------------------------------------------------------------

def _template_parts(record: QARecord) -> Tuple[List[str], List[Slot]]:
    """Template as alternating literals and slots: lit_0 s_0 lit_1 ... lit_n."""
    by_marker = {f"<{s.name}>": s for s in record.slots}
    pattern = re.compile("|".join(re.escape(m) for m in by_marker))
    literals, slots = [], []
    cursor = 0
    for m in pattern.finditer(record.answer_template):
        literals.append(record.answer_template[cursor:m.start()])
        slots.append(by_marker[m.group(0)])
        cursor = m.end()
    literals.append(record.answer_template[cursor:])
    return literals, slots


def parse_answer(
    text: str,
    record: QARecord,
    library: Optional[DescriptorLibrary] = None,
    strict: bool = False,
) -> ParsedAnswer:
    """Recover slot values by anchoring on the template's fixed text.

    Values equal to a slot's literal <name> marker are reported as
    unresolved. Descriptor values missing from the library raise
    UnknownDescriptorError in strict mode and are flagged novel otherwise.
    """
    lib = library or default_library()
    literals, slots = _template_parts(record)
    if not text.startswith(literals[0]):
        raise ParseError(
            f"answer does not start with the anchor {literals[0]!r}",
            anchor=literals[0],
        )
    pos = len(literals[0])
    values: Dict[str, str] = {}
    for slot, lit in zip(slots, literals[1:]):
        if lit:
            idx = text.find(lit, pos)
            if idx < 0:
                raise ParseError(f"missing anchor {lit!r} after position {pos}",
                                 anchor=lit)
            values[slot.name] = text[pos:idx]
            pos = idx + len(lit)
        else:
            values[slot.name] = text[pos:]
            pos = len(text)
    if pos != len(text):
        raise ParseError(f"unexpected trailing text {text[pos:]!r}",
                         anchor=literals[-1])

    unresolved, novel = [], []
    for slot in slots:
        v = values[slot.name]
        if v == f"<{slot.name}>":
            unresolved.append(slot.name)
            continue
        if slot.kind == "phy_descriptor" and not lib.knows_physical(slot.name, v):
            if strict:
                raise UnknownDescriptorError(
                    f"{v!r} is not a known {slot.name} descriptor"
                )
            novel.append(slot.name)
        elif slot.kind == "act_descriptor" and v not in lib.actions:
            if strict:
                raise UnknownDescriptorError(f"{v!r} is not a known grasp action")
            novel.append(slot.name)
    return ParsedAnswer(values=values, unresolved=tuple(unresolved),
                        novel=tuple(novel))


def build_instruction_prompt(
    scene_description: str, object_names: Sequence[str]
) -> str:
    """Deterministic prompt asking an external text generator for 3-5
    flexible instructions that imply, but never name, the listed objects."""
    names = list(object_names)
    if not scene_description or not names:
        raise ValueError("need a scene description and at least one object name")
    listed = "\n".join(f"- {n}" for n in names)
    return (
        "You write requests for a robot that can pick up objects.\n"
        "\n"
        f"Scene: {scene_description}\n"
        "\n"
        "Objects that can be grasped:\n"
        f"{listed}\n"
        "\n"
        "Generate 3-5 flexible instructions. Each instruction must be a short,\n"
        "plausible everyday request that implicitly demands the grasping of one\n"
        "or multiple of the objects above without naming targets. Never mention\n"
        "any object name (or its plural) directly; the robot must infer the\n"
        "targets from context alone. Output one instruction per line.\n"
    )


def _name_variants(name: str) -> List[str]:
    return [name, name + "s", name + "es"]


def validate_instruction(instr: Instruction) -> InstructionCheck:
    """Reject instructions that name a target (whole word, case-insensitive,
    with simple +s/+es plural forms); accept everything else."""
    for target in instr.target_names:
        for variant in _name_variants(target):
            if re.search(rf"\b{re.escape(variant)}\b", instr.text, re.IGNORECASE):
                return InstructionCheck(
                    accepted=False, reason=f"explicit-name: {target!r}"
                )
    return InstructionCheck(accepted=True)
