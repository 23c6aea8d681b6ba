import numpy as np
import pytest

from graspkit import (
    EmptyTargetsError,
    Instruction,
    ParseError,
    UnknownDescriptorError,
    build_action_qa,
    build_cot_sequence,
    build_instruction_prompt,
    build_property_qa,
    build_target_qa,
    default_library,
    parse_answer,
    validate_instruction,
)
from graspkit.cot import PROPERTY_GROUPS, QARecord, Slot


class TestDefaultLibrary:
    def test_action_verbs(self):
        lib = default_library()
        for verb in ("clamp", "pinch", "snap", "pluck", "lift", "grip"):
            assert verb in lib.actions

    def test_material_hardness_options(self):
        lib = default_library()
        for d in ("soft", "hard", "rigid", "flexible"):
            assert d in lib.descriptors("material", "hardness")

    def test_material_strength_and_elasticity(self):
        lib = default_library()
        for d in ("brittle", "ductile", "tough"):
            assert d in lib.descriptors("material", "strength")
        for d in ("elastic", "viscoelastic", "inflexible"):
            assert d in lib.descriptors("material", "elasticity")

    def test_surface_worked_example(self):
        lib = default_library()
        assert "smooth" in lib.descriptors("surface", "texture")
        assert "polished" in lib.descriptors("surface", "roughness")
        assert "slippery" in lib.descriptors("surface", "friction")

    def test_fixed_characteristics(self):
        lib = default_library()
        assert lib.characteristics("material") == ("hardness", "strength", "elasticity")
        assert lib.characteristics("surface") == ("texture", "roughness", "friction")
        assert len(lib.characteristics("shape")) == 3

    def test_descriptors_are_lowercase_tokens(self):
        lib = default_library()
        for group in PROPERTY_GROUPS:
            for c in lib.characteristics(group):
                for d in lib.descriptors(group, c):
                    assert d and d == d.lower() and " " not in d

    def test_open_world_extension(self):
        lib = default_library().with_physical("surface", "friction", "velvety")
        assert lib.knows_physical("friction", "velvety")
        lib2 = lib.with_actions("scoop")
        assert "scoop" in lib2.actions


class TestTargetQA:
    def test_two_targets(self):
        rec = build_target_qa(["remote control", "glasses"])
        assert rec.render() == "[remote control, glasses]. Total 2."
        assert rec.question == "Which objects need to be grasped?"

    def test_single_target_count(self):
        rec = build_target_qa(["mug"])
        assert rec.render() == "[mug]. Total 1."

    def test_round_trip(self):
        rec = build_target_qa(["remote control", "glasses"])
        parsed = parse_answer(rec.render(), rec)
        assert parsed.values["obj_1"] == "remote control"
        assert parsed.values["obj_2"] == "glasses"
        assert parsed.values["count"] == "2"
        assert not parsed.unresolved

    def test_fully_supervised(self):
        rec = build_target_qa(["mug", "vase", "plate"])
        assert all(w == 1.0 for w in rec.supervision())
        assert rec.zero_weight_slot_count() == 0

    def test_empty_targets(self):
        with pytest.raises(EmptyTargetsError):
            build_target_qa([])


class TestPropertyQA:
    def test_material_sentence_shape(self):
        rec = build_property_qa("glass cup", "material")
        filled = rec.fill({"hardness": "rigid", "strength": "brittle",
                           "elasticity": "inflexible"})
        assert filled.render() == (
            "The material properties of glass cup are rigid (hardness), "
            "brittle (strength), and inflexible (elasticity)."
        )

    def test_question_inlines_options(self):
        rec = build_property_qa("vase", "material")
        assert "hardness [options: soft, hard, rigid, flexible, etc.]" in rec.question
        assert "strength [options: brittle, ductile, tough, etc.]" in rec.question

    @pytest.mark.parametrize("group", PROPERTY_GROUPS)
    def test_three_zero_weight_slots(self, group):
        rec = build_property_qa("anything", group)
        assert rec.zero_weight_slot_count() == 3
        weights = rec.supervision()
        assert weights.count(0.0) == 3  # one word token per descriptor marker

    def test_unfilled_markers_survive_render(self):
        rec = build_property_qa("mug", "surface")
        rendered = rec.render()
        for c in ("texture", "roughness", "friction"):
            assert f"<{c}>" in rendered
        parsed = parse_answer(rendered, rec)
        assert set(parsed.unresolved) == {"texture", "roughness", "friction"}


class TestActionQA:
    def test_render(self):
        rec = build_action_qa("vase").fill({"action": "pinch"})
        assert rec.render() == "The appropriate verb to grasp the vase is pinch."

    def test_single_zero_weight_span(self):
        rec = build_action_qa("vase")
        assert rec.zero_weight_slot_count() == 1
        assert rec.supervision().count(0.0) == 1

    def test_parse_recovers_value(self):
        rec = build_action_qa("vase").fill({"action": "pinch"})
        parsed = parse_answer(rec.render(), rec)
        assert parsed.values["action"] == "pinch"
        assert not parsed.novel

    def test_question_lists_verbs(self):
        rec = build_action_qa("bowl")
        assert "[options: clamp, pinch, snap, pluck, lift, grip, etc.]" in rec.question


class TestParseAnswer:
    def test_novel_descriptor_open_world(self):
        rec = build_property_qa("cushion", "surface").fill(
            {"texture": "velvety", "roughness": "matte", "friction": "grippy"}
        )
        parsed = parse_answer(rec.render(), rec)
        assert parsed.values["texture"] == "velvety"
        assert parsed.novel == ("texture",)

    def test_novel_descriptor_strict(self):
        rec = build_property_qa("cushion", "surface").fill(
            {"texture": "velvety", "roughness": "matte", "friction": "grippy"}
        )
        with pytest.raises(UnknownDescriptorError):
            parse_answer(rec.render(), rec, strict=True)

    def test_missing_anchor_named(self):
        rec = build_target_qa(["mug"])
        broken = rec.render().rstrip(".")
        with pytest.raises(ParseError) as err:
            parse_answer(broken, rec)
        assert err.value.anchor == "."

    def test_wrong_prefix(self):
        rec = build_action_qa("vase").fill({"action": "grip"})
        with pytest.raises(ParseError):
            parse_answer("Completely unrelated text", rec)

    def test_trailing_garbage(self):
        rec = build_action_qa("vase").fill({"action": "grip"})
        with pytest.raises(ParseError):
            parse_answer(rec.render() + " extra", rec)


class TestCotSequence:
    def test_single_target_five_records(self):
        assert len(build_cot_sequence(["mug"])) == 5

    def test_two_targets_nine_records(self):
        seq = build_cot_sequence(["remote control", "glasses"])
        assert len(seq) == 9
        stages = [r.stage for r in seq]
        assert stages == (
            ["target_parsing"] + ["property_analysis"] * 6 + ["action_selection"] * 2
        )

    def test_property_records_grouped_per_target(self):
        seq = build_cot_sequence(["a", "b"])
        groups = [r.question.split("analyze its ")[1].split(" ")[0]
                  for r in seq[1:7]]
        assert groups == ["material", "surface", "shape"] * 2
        objects = [s.value for r in seq[1:7] for s in r.slots if s.name == "object"]
        assert objects == ["a", "a", "a", "b", "b", "b"]

    def test_zero_weight_slot_budget(self):
        for k in (1, 2, 5):
            seq = build_cot_sequence([f"obj{i}" for i in range(k)])
            zero_slots = sum(r.zero_weight_slot_count() for r in seq)
            assert zero_slots == 10 * k

    def test_render_parse_inversion_random_fillings(self):
        rng = np.random.default_rng(0)
        lib = default_library()
        objects = ["mug", "glass cup", "remote control", "vase", "notebook"]
        for _ in range(1000):
            name = objects[rng.integers(0, len(objects))]
            group = PROPERTY_GROUPS[rng.integers(0, 3)]
            chars = lib.characteristics(group)
            values = {
                c: str(rng.choice(lib.descriptors(group, c))) for c in chars
            }
            rec = build_property_qa(name, group, lib).fill(values)
            parsed = parse_answer(rec.render(), rec, lib)
            assert {c: parsed.values[c] for c in chars} == values
            assert parsed.values["object"] == name
            assert not parsed.novel and not parsed.unresolved

    def test_serialization_fields(self):
        rec = build_cot_sequence(["mug"])[1]
        obj = rec.to_json()
        assert set(obj) == {
            "stage", "question", "answer_template", "slots", "supervision",
            "char_spans",
        }
        back = QARecord.from_json(obj)
        assert back == rec


class TestInstructionPrompt:
    CAR_KEYS_SCENE = (
        "black car keys, a ceramic mug, a red notebook, and sunglasses on the table"
    )

    def test_embeds_description_verbatim(self):
        prompt = build_instruction_prompt(
            self.CAR_KEYS_SCENE, ["car keys", "mug", "notebook", "sunglasses"]
        )
        assert self.CAR_KEYS_SCENE in prompt

    def test_contains_count_constraint(self):
        prompt = build_instruction_prompt("a desk", ["pen"])
        assert "3-5" in prompt

    def test_deterministic_bytes(self):
        args = (self.CAR_KEYS_SCENE, ["car keys", "sunglasses"])
        assert build_instruction_prompt(*args) == build_instruction_prompt(*args)

    def test_lists_forbidden_names(self):
        prompt = build_instruction_prompt("a desk", ["pen", "stapler"])
        assert "- pen" in prompt and "- stapler" in prompt


class TestValidateInstruction:
    def test_accepts_drive_example(self):
        ins = Instruction(
            text="It's sunny outside and I want to go for a drive",
            scene_id="s0",
            target_names=("car keys", "sunglasses"),
        )
        assert validate_instruction(ins).accepted

    def test_rejects_explicit_name(self):
        ins = Instruction(
            text="Grasp the black car keys",
            scene_id="s0",
            target_names=("car keys",),
        )
        check = validate_instruction(ins)
        assert not check.accepted
        assert "explicit-name" in check.reason

    def test_rejects_case_and_plural(self):
        ins = Instruction(
            text="hand me the MUGS please", scene_id="s0", target_names=("mug",)
        )
        assert not validate_instruction(ins).accepted

    def test_rejects_es_plural(self):
        ins = Instruction(
            text="pass the brushes", scene_id="s0", target_names=("brush",)
        )
        assert not validate_instruction(ins).accepted

    def test_substring_is_not_whole_word(self):
        # "mug" inside "smuggle" must not trigger
        ins = Instruction(
            text="do not smuggle anything", scene_id="s0", target_names=("mug",)
        )
        assert validate_instruction(ins).accepted

    def test_adversarial_embeddings_never_accepted(self):
        rng = np.random.default_rng(1)
        names = ["mug", "car keys", "vase", "remote control", "notebook"]
        frames = [
            "please bring the {} over here",
            "I left my {} on the couch",
            "Could you grab THE {} now?",
            "the {}, if you would",
            "{} please",
        ]
        for _ in range(200):
            name = names[rng.integers(0, len(names))]
            frame = frames[rng.integers(0, len(frames))]
            plural = name + ("es" if rng.integers(0, 2) else "s")
            text = frame.format(plural if rng.integers(0, 2) else name)
            ins = Instruction(text=text, scene_id="s0", target_names=(name,))
            assert not validate_instruction(ins).accepted
