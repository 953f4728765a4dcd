"""
Schema validation test: ensures REPORT_JSON_SCHEMA is valid and accepts conformant reports.
"""
import pytest
from apps.smnae.schemas import REPORT_JSON_SCHEMA
from jsonschema import validate, ValidationError


def fusion_block(fusion="sum"):
    return {
        "fusion": fusion,
        "eer": 0.25,
        "accuracy_pct": 75.0,
        "n_pos": 2,
        "n_neg": 2,
        "roc": [
            {"far": 1.0, "frr": 0.0, "threshold": 0.1},
            {"far": 0.0, "frr": 1.0, "threshold": 0.9},
        ],
        "pairs": [
            {"video_a": "F000/S00", "video_b": "F000/S01", "label": True, "relation": "FS",
             "score": 0.8, "score_ab": 0.7, "score_ba": 0.9, "n_units": 2},
            {"video_a": "F000/S00", "video_b": "F001/S00", "label": False, "relation": None,
             "score": 0.2, "score_ab": 0.2, "score_ba": 0.2, "n_units": 2},
        ],
        "per_relation": {"FS": {"eer": 0.0, "accuracy_pct": 100.0, "n_pos": 1, "n_neg": 2}},
    }


def minimal_report():
    return {
        "version": "1.0.0",
        "protocol": "vidlet",
        "model": "model.bin",
        "z": 2,
        "p": 0.8,
        "variant": "smnae",
        "fusion": "sum",
        "eer": 0.25,
        "accuracy_pct": 75.0,
        "results": {"sum": fusion_block()},
    }


def test_report_schema_minimal():
    """Test that a single-fusion report passes schema validation."""
    validate(instance=minimal_report(), schema=REPORT_JSON_SCHEMA["schema"])


def test_report_schema_both_fusions():
    """Test a report carrying both fusion rules."""
    report = minimal_report()
    report["results"]["max"] = fusion_block("max")
    validate(instance=report, schema=REPORT_JSON_SCHEMA["schema"])


def test_report_schema_rejects_extra_pair_field():
    """Test that schema rejects pair entries with additional properties."""
    report = minimal_report()
    report["results"]["sum"]["pairs"][0]["note"] = "this field should not be allowed"
    with pytest.raises(ValidationError) as exc_info:
        validate(instance=report, schema=REPORT_JSON_SCHEMA["schema"])
    assert "Additional properties are not allowed" in str(exc_info.value)


def test_report_schema_rejects_unknown_fusion():
    """Test that schema rejects fusion names outside sum/max."""
    report = minimal_report()
    report["fusion"] = "mean"
    with pytest.raises(ValidationError) as exc_info:
        validate(instance=report, schema=REPORT_JSON_SCHEMA["schema"])
    assert "'mean' is not one of" in str(exc_info.value)


def test_report_schema_rejects_out_of_range_rates():
    """Test that FAR above 1 is rejected."""
    report = minimal_report()
    report["results"]["sum"]["roc"][0]["far"] = 1.5
    with pytest.raises(ValidationError):
        validate(instance=report, schema=REPORT_JSON_SCHEMA["schema"])


def test_report_schema_requires_results():
    """Test that schema enforces required fields."""
    invalid = {"version": "1.0.0", "eer": 0.1}
    with pytest.raises(ValidationError) as exc_info:
        validate(instance=invalid, schema=REPORT_JSON_SCHEMA["schema"])
    assert "is a required property" in str(exc_info.value)
