import json

import numpy as np
import pytest

from forgebench.config import (RunConfig, design_from_dict, dumps_design, load_design,
                               parse_design_config, parse_run_config, validate_design)
from forgebench.dtypes import FLOAT32, DataType
from forgebench.errors import ConfigSyntaxError, SchemaError

from conftest import EXAMPLES


class TestDataType:
    @pytest.mark.parametrize("text", ["float32", "fixed<16,6>", "fixed<64,1>", "opaque:half"])
    def test_round_trip(self, text):
        assert str(DataType.parse(text)) == text

    @pytest.mark.parametrize("text", ["fixed<4,5>", "fixed<0,0>", "fixed<65,3>", "int8", "opaque:"])
    def test_rejects(self, text):
        with pytest.raises(ValueError):
            DataType.parse(text)

    def test_c_types(self):
        assert FLOAT32.c_type() == "float"
        assert DataType.parse("fixed<16,6>").c_type() == "ap_fixed<16, 6>"
        assert DataType.parse("opaque:half").c_type() == "half"

    def test_fixed_quantize_floors_to_grid(self):
        dt = DataType.parse("fixed<8,4>")  # step 1/16
        q = dt.quantize(np.array([0.07, -0.07, 1.5]))
        assert q.tolist() == [0.0625, -0.125, 1.5]

    def test_tolerance(self):
        assert FLOAT32.tolerance(100) == 1e-4
        assert DataType.parse("fixed<16,8>").tolerance(10) == 10 * 2.0 ** -8


class TestParse:
    def test_minimal(self, gemm_doc):
        cfg = design_from_dict(gemm_doc)
        assert cfg.name == "identity_gemm"
        assert cfg.synth.clock_period_ns == 10.0
        assert cfg.synth.flow == ("csim", "synth")
        assert cfg.synth.data_type == FLOAT32
        assert cfg.calls[0].params.m == 2

    def test_syntax_error_has_position(self):
        with pytest.raises(ConfigSyntaxError) as info:
            parse_design_config('{\n  "name": "x",\n  oops\n}')
        assert info.value.line == 3

    def test_unknown_field(self, gemm_doc):
        gemm_doc["calls"][0]["params"]["tile"] = 4
        with pytest.raises(SchemaError) as info:
            design_from_dict(gemm_doc)
        assert info.value.path == "calls[0].params.tile"

    def test_missing_field(self, gemm_doc):
        del gemm_doc["interfaces"][0]["shape"]
        with pytest.raises(SchemaError) as info:
            design_from_dict(gemm_doc)
        assert info.value.path == "interfaces[0].shape"

    def test_undeclared_buffer(self, gemm_doc):
        gemm_doc["calls"][0]["inputs"][1] = "Q"
        with pytest.raises(SchemaError) as info:
            design_from_dict(gemm_doc)
        assert info.value.path == "calls[0].inputs[1]"

    def test_bad_choice(self, gemm_doc):
        gemm_doc["calls"][0]["params"]["loop_order"] = "iij"
        with pytest.raises(SchemaError):
            design_from_dict(gemm_doc)

    def test_duplicate_name(self, gemm_doc):
        gemm_doc["memories"] = [{"name": "A", "space": "on_chip", "shape": [1]}]
        with pytest.raises(SchemaError, match="duplicate"):
            design_from_dict(gemm_doc)

    def test_flow_is_canonicalized(self, gemm_doc):
        gemm_doc["synth"] = {"flow": ["impl", "csim", "synth"]}
        assert design_from_dict(gemm_doc).synth.flow == ("csim", "synth", "impl")

    def test_dump_round_trip(self, gemm_doc):
        cfg = design_from_dict(gemm_doc)
        again = parse_design_config(dumps_design(cfg))
        assert again == cfg
        assert dumps_design(again) == dumps_design(cfg)

    @pytest.mark.parametrize("name", ["resnet18_block", "vgg_block", "gpt_block", "llama_block"])
    def test_examples_load_and_validate(self, name):
        cfg = load_design(EXAMPLES / f"{name}.json")
        assert validate_design(cfg).ok


class TestRunConfig:
    def test_defaults(self):
        run = parse_run_config("{}")
        assert run == RunConfig()

    def test_workers_must_be_positive(self):
        with pytest.raises(SchemaError, match="workers must be >= 1"):
            parse_run_config('{"workers": 0}')

    def test_fail_stage_checked(self):
        with pytest.raises(SchemaError):
            parse_run_config(json.dumps({"fail_stages": {"d": "bitstream"}}))


class TestValidate:
    def test_ok(self, gemm_cfg):
        assert validate_design(gemm_cfg).ok

    def test_inner_dimension_message(self, gemm_doc):
        gemm_doc["interfaces"][1]["shape"] = [4, 2]
        report = validate_design(design_from_dict(gemm_doc))
        assert not report.ok
        assert any("inner dimensions 3≠4" in d.message for d in report)

    def test_output_shape(self, gemm_doc):
        gemm_doc["interfaces"][2]["shape"] = [2, 3]
        report = validate_design(design_from_dict(gemm_doc))
        assert [d.path for d in report] == ["calls[0].outputs[0]"]

    def test_read_before_define(self, gemm_doc):
        gemm_doc["memories"] = [{"name": "T", "space": "on_chip", "shape": [2, 3]}]
        gemm_doc["calls"][0]["inputs"][0] = "T"
        report = validate_design(design_from_dict(gemm_doc))
        assert any("read before" in d.message for d in report)

    def test_zero_init_counts_as_defined(self, gemm_doc):
        gemm_doc["memories"] = [{"name": "T", "space": "on_chip", "shape": [2, 3], "init": "zeros"}]
        gemm_doc["calls"][0]["inputs"][0] = "T"
        assert validate_design(design_from_dict(gemm_doc)).ok

    def test_write_to_input(self, gemm_doc):
        gemm_doc["interfaces"][2]["direction"] = "in"
        gemm_doc["interfaces"][0]["shape"] = [2, 2]
        gemm_doc["calls"][0]["outputs"] = ["A"]
        report = validate_design(design_from_dict(gemm_doc))
        assert any("writes input interface" in d.message for d in report)

    def test_output_never_written(self, gemm_doc):
        gemm_doc["interfaces"].append({"name": "D", "direction": "out", "shape": [1]})
        report = validate_design(design_from_dict(gemm_doc))
        assert any("never written" in d.message for d in report)

    def test_arity(self, gemm_doc):
        gemm_doc["calls"][0]["inputs"] = ["A"]
        report = validate_design(design_from_dict(gemm_doc))
        assert any("expects 2 inputs" in d.message for d in report)

    def test_element_type_mismatch(self, gemm_doc):
        gemm_doc["interfaces"][0]["element"] = "fixed<16,6>"
        report = validate_design(design_from_dict(gemm_doc))
        assert [d.path for d in report] == ["interfaces[0].element"]


@pytest.mark.parametrize("bad", ["int", "main", "data_t"])
def test_reserved_names_rejected(gemm_doc, bad):
    gemm_doc["interfaces"][0]["name"] = bad
    gemm_doc["calls"][0]["inputs"][0] = bad
    with pytest.raises(SchemaError, match="interfaces\\[0\\].name"):
        design_from_dict(gemm_doc)
