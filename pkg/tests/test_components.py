import pytest

from trackscan.components import (
    ComponentId,
    ComponentKind,
    DefectSet,
    FootageId,
    FootageNameError,
    LabelError,
    ManifestError,
    Medium,
    PairingPolicy,
    build_run_manifest,
    component_inventory,
    format_component_label,
    format_footage_name,
    get_test_case,
    parse_component_label,
    parse_footage_name,
    parse_number_range,
    standard_test_cases,
)


class TestComponentLabels:
    def test_four_kinds(self):
        assert len(ComponentKind) == 4

    @pytest.mark.parametrize(
        "label, kind, rail, tie",
        [
            ("1-7S", ComponentKind.SCREW, 1, 7),
            ("2-8W", ComponentKind.WASHER, 2, 8),
            ("8B", ComponentKind.BLOCK, None, 8),
            ("2-1C", ComponentKind.CONNECTOR, 2, 1),
        ],
    )
    def test_parse(self, label, kind, rail, tie):
        id = parse_component_label(label)
        assert id == ComponentId(kind, tie, rail)
        assert format_component_label(id) == label

    @pytest.mark.parametrize("label", ["", "3-7S", "1-0S", "1-8B", "5C", "1-5C", "7X", "1-7"])
    def test_invalid_labels(self, label):
        with pytest.raises(LabelError):
            parse_component_label(label)

    def test_invalid_component_id(self):
        with pytest.raises(LabelError):
            ComponentId(ComponentKind.BLOCK, 3, rail=1)
        with pytest.raises(LabelError):
            ComponentId(ComponentKind.SCREW, 3)

    def test_inventory(self):
        inventory = component_inventory()
        assert len(inventory) == 49
        assert len(set(inventory)) == 49
        counts = {kind: sum(id.kind is kind for id in inventory) for kind in ComponentKind}
        assert counts == {
            ComponentKind.BLOCK: 9,
            ComponentKind.SCREW: 18,
            ComponentKind.WASHER: 18,
            ComponentKind.CONNECTOR: 4,
        }

    def test_all_labels_round_trip(self):
        for id in component_inventory():
            assert parse_component_label(id.label) == id

    def test_kind_from_name(self):
        assert ComponentKind.from_name("block") is ComponentKind.BLOCK
        assert ComponentKind.from_name("Screw") is ComponentKind.SCREW
        with pytest.raises(ValueError):
            ComponentKind.from_name("rail")


class TestDefectSet:
    def test_from_labels(self):
        defects = DefectSet.from_labels(["8B", "1-8S"])
        assert len(defects) == 2
        assert parse_component_label("8B") in defects
        assert not defects.is_safe

    def test_duplicates_rejected(self):
        with pytest.raises(LabelError):
            DefectSet.from_labels(["8B", "8B"])

    def test_empty_is_safe(self):
        assert DefectSet().is_safe
        assert DefectSet().labels == []

    def test_labels_sorted(self):
        defects = DefectSet.from_labels(["2-1C", "8B", "2-8W", "1-8S"])
        assert defects.labels == sorted(
            defects.labels, key=lambda label: parse_component_label(label).sort_key
        )


class TestTestCases:
    def test_fifteen_cases(self):
        cases = standard_test_cases()
        assert [c.number for c in cases] == list(range(1, 16))

    def test_control_case_is_safe(self):
        assert get_test_case(1).defects.is_safe

    def test_case_four(self):
        assert get_test_case(4).defects.labels == ["1-7S"]

    def test_case_fifteen(self):
        assert set(get_test_case(15).defects.labels) == {
            "1-8S",
            "2-8S",
            "1-8W",
            "2-8W",
            "8B",
            "2-1C",
        }

    def test_other_cases_have_defects(self):
        assert all(not c.defects.is_safe for c in standard_test_cases()[1:])

    def test_unknown_case(self):
        with pytest.raises(ValueError):
            get_test_case(16)


class TestFootageNames:
    def test_parse(self):
        footage = parse_footage_name("15_F_T5")
        assert footage == FootageId(15, Medium.FRAME, 5)

    def test_extension_stripped(self):
        assert parse_footage_name("01_V_T2.jpg") == FootageId(1, Medium.VIDEO, 2)

    def test_format(self):
        footage = FootageId(1, Medium.FRAME, 5)
        assert format_footage_name(footage) == "01_F_T5"
        assert format_footage_name(footage, ".jpg") == "01_F_T5.jpg"
        assert footage.name == "01_F_T5"

    def test_all_names_round_trip(self):
        names = [
            format_footage_name(FootageId(case, medium, trial))
            for case in range(1, 16)
            for medium in Medium
            for trial in range(1, 6)
        ]
        assert len(names) == 150
        for name in names:
            assert format_footage_name(parse_footage_name(name)) == name

    @pytest.mark.parametrize("name", ["", "16_F_T1", "00_F_T1", "01_X_T1", "01_F_T6", "1_F_T1"])
    def test_invalid(self, name):
        with pytest.raises(FootageNameError):
            parse_footage_name(name)


class TestRunManifest:
    def test_full_manifest(self):
        manifest = build_run_manifest(range(1, 16), range(1, 6))
        assert len(manifest) == 75
        pair = manifest.pairs[-1]
        assert pair.control.name == "01_F_T5"
        assert pair.variable.name == "15_F_T5"
        assert pair.expected == get_test_case(15).defects

    def test_shifted_pairing(self):
        manifest = build_run_manifest([15], [1, 5], PairingPolicy.SHIFTED_TRIAL)
        assert [(p.variable.name, p.control.name) for p in manifest] == [
            ("15_F_T1", "01_F_T2"),
            ("15_F_T5", "01_F_T1"),
        ]

    def test_empty_selection(self):
        with pytest.raises(ManifestError):
            build_run_manifest([], [1])

    def test_out_of_range(self):
        with pytest.raises(ManifestError):
            build_run_manifest([16], [1])


@pytest.mark.parametrize(
    "text, expected",
    [("1-15", list(range(1, 16))), ("1,4", [1, 4]), ("2-4,9", [2, 3, 4, 9]), ("", [])],
)
def test_parse_number_range(text, expected):
    assert parse_number_range(text) == expected
