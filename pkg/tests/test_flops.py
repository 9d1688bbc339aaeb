import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wavedepth.conv import ConvSpec
from wavedepth.errors import FormatError
from wavedepth.flops import (
    LayerShape,
    MacReport,
    arch_report,
    default_arch,
    load_arch,
    mac_dense,
    mac_sparse,
    save_arch,
)

SPEC = LayerShape("x", 8, 8, c_in=2, c_out=4, k=3)


def test_dense_hand_example():
    # 64 pixels * (2*9 + 1) * 4
    assert mac_dense(SPEC, 8, 8) == 4864


def test_sparse_quarter():
    assert mac_sparse(SPEC, 8, 8, 0.25) == 1216
    assert mac_sparse(SPEC, 8, 8, 0) == 0
    assert mac_sparse(SPEC, 8, 8, active=16) == 1216


def test_zero_outputs_and_pointwise():
    assert mac_dense(LayerShape("z", 8, 8, 2, 0), 8, 8) == 0
    assert mac_dense(LayerShape("p", 5, 7, 1, 6, k=1), 5, 7) == 5 * 7 * 2 * 6


def test_sparse_rejects_bad_psi():
    with pytest.raises(ValueError):
        mac_sparse(SPEC, 8, 8, 1.5)
    with pytest.raises(ValueError):
        mac_sparse(SPEC, 8, 8, -0.1)
    with pytest.raises(ValueError):
        mac_sparse(SPEC, 8, 8, active=65)


@given(st.integers(1, 512), st.integers(0, 512), st.sampled_from([1, 3, 5, 7]),
       st.integers(1, 400), st.integers(1, 400))
def test_property_full_sparsity_is_dense(c_in, c_out, k, h, w):
    spec = LayerShape("r", h, w, c_in, c_out, k)
    assert mac_sparse(spec, h, w, 1.0) == mac_dense(spec, h, w)


def test_conv_spec_counts_like_shape(rng):
    spec = ConvSpec.random(rng, 2, 4, 3)
    assert mac_dense(spec, 8, 8) == 4864


def test_arch_uniform_third_exact():
    layers = [LayerShape(f"l{i}", 8 * i, 8, i, 2 * i, 3, True, i % 4) for i in range(1, 9)]
    report = arch_report(layers, Fraction(1, 3))
    assert report.ratio == Fraction(1, 3)
    assert arch_report(layers, 1).ratio == 1
    assert report.total_dense == sum(mac_dense(l, l.h, l.w) for l in layers)
    assert report.total_sparse == sum(c.mac_sparse for c in report.layers)


def test_arch_non_maskable_stay_dense():
    layers = [LayerShape("a", 4, 4, 1, 1, 1, maskable=False), LayerShape("b", 4, 4, 1, 1, 1)]
    report = arch_report(layers, 0)
    assert report.total_sparse == 32
    assert report.maskable_ratio == 0


def test_arch_mask_values():
    layers = [LayerShape("a", 4, 4, 1, 1, 1, scale=2)]
    mask = np.zeros((4, 4), bool)
    mask[:2, :3] = True
    report = arch_report(layers, {2: mask})
    assert report.layers[0].active == 6
    assert report.total_sparse == 6 * 2
    with pytest.raises(ValueError):
        arch_report(layers, {2: np.ones((2, 2), bool)})


def test_by_scale_and_csv():
    layers = default_arch(64, 128)
    report = arch_report(layers, {3: "0.5", 2: "0.25"})
    per = report.by_scale()
    assert sum(d for d, _ in per.values()) == report.total_dense
    rows = report.to_csv().strip().splitlines()
    assert rows[0].startswith("name,scale")
    assert rows[-1].startswith("TOTAL")
    assert len(rows) == len(layers) + 2
    assert "FLOPs" in report.format_table()


def test_default_arch_320x1024():
    layers = default_arch(320, 1024)
    names = {l.name: l for l in layers}
    assert names["upconv5"].maskable is False
    assert (names["iconv1"].h, names["iconv1"].w) == (160, 512)
    assert (names["iconv4"].h, names["iconv4"].w) == (20, 64)
    assert all(l.scale in range(5) for l in layers)
    with pytest.raises(ValueError):
        default_arch(100, 100)


def test_arch_third_on_default_arch():
    report = arch_report(default_arch(320, 1024), Fraction(1, 3))
    assert report.maskable_ratio == Fraction(1, 3)


def test_save_load_roundtrip(tmp_path):
    layers = default_arch(64, 64)
    save_arch(layers, tmp_path / "a.json")
    assert load_arch(tmp_path / "a.json") == layers


@pytest.mark.parametrize("content", [
    "not json", "[]", '{"layers": []}', '[{"name": "a"}]',
    '[{"name": "a", "h": -1, "w": 2, "c_in": 1, "c_out": 1}]',
])
def test_load_arch_malformed(tmp_path, content):
    p = tmp_path / "bad.json"
    p.write_text(content)
    with pytest.raises(FormatError):
        load_arch(p)


def test_load_arch_dict_form(tmp_path):
    p = tmp_path / "d.json"
    p.write_text(json.dumps({"layers": [{"name": "a", "h": 2, "w": 2, "c_in": 1, "c_out": 1}]}))
    assert load_arch(p)[0] == LayerShape("a", 2, 2, 1, 1)


def test_report_record():
    report = MacReport()
    report.record("a", SPEC, 8, 8, 16, scale=1)
    assert report.total_dense == 4864 and report.total_sparse == 1216
    assert report.ratio == Fraction(1, 4)
