import io
import json
import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from phaseless.analysis import (
    HARTREE_TO_KJMOL,
    BasisSeriesPoint,
    EnergyRecord,
    SpeciesEnergy,
    apply_corrections,
    cbs_extrapolate,
    compare_with_printed,
    hartree_to_kjmol,
    implied_reference_cbs,
    kjmol_to_hartree,
    load_reference_corrections,
    load_reference_energies,
    load_reference_relative,
    parse_uncertain,
    read_energy_csv,
    relative_energy,
    relative_energy_table,
    write_energy_csv,
    write_report,
    zpve_correct,
)


def _lookup(records, geometry, method, basis, species):
    (hit,) = [r for r in records if r.key() == (geometry, method, basis, species)]
    return hit


def test_unit_conversion_round_trip():
    assert hartree_to_kjmol(1.0) == HARTREE_TO_KJMOL
    assert kjmol_to_hartree(hartree_to_kjmol(0.123)) == pytest.approx(0.123, rel=1e-15)


def test_cbs_oxygen_triplet_ccsdt():
    recs = load_reference_energies()
    get = lambda m, b: _lookup(recs, "exp", m, b, "3O2").energy  # noqa: E731
    tz = BasisSeriesPoint(3, get("CCSD(T)", "TZ"), get("R(O)HF", "TZ"))
    qz = BasisSeriesPoint(4, get("CCSD(T)", "QZ"), get("R(O)HF", "QZ"))
    # (4^3 (-0.5700) - 3^3 (-0.5008)) / (4^3 - 3^3) by hand
    res = cbs_extrapolate(tz, qz, reference_cbs=-149.6674)
    assert res.correlation == pytest.approx(-22.9584 / 37, abs=1e-9)
    assert abs(res.correlation - (-0.6205)) <= 1e-4
    assert res.total == pytest.approx(-149.6674 + res.correlation)
    assert res.cardinals == (3, 4)


def test_implied_hf_limit_reproduces_tabulated_cbs_total():
    recs = load_reference_energies()
    get = lambda m, b: _lookup(recs, "exp", m, b, "3O2").energy  # noqa: E731
    tz = BasisSeriesPoint(3, get("CCSD(T)", "TZ"), get("R(O)HF", "TZ"))
    qz = BasisSeriesPoint(4, get("CCSD(T)", "QZ"), get("R(O)HF", "QZ"))
    hf = implied_reference_cbs(tz, qz, get("CCSD(T)", "CBS"))
    # a basis-set limit must lie below the largest finite-basis value
    assert hf < get("R(O)HF", "QZ")
    assert hf == pytest.approx(-149.6674, abs=1e-4)


@given(
    corr_inf=st.floats(-2.0, -0.01),
    slope=st.floats(-5.0, 5.0),
    x=st.integers(2, 5),
    dy=st.integers(1, 3),
)
def test_cbs_recovers_exact_model(corr_inf, slope, x, dy):
    y = x + dy
    p = BasisSeriesPoint(x, -1.0 + corr_inf + slope / x**3, -1.0)
    q = BasisSeriesPoint(y, -1.0 + corr_inf + slope / y**3, -1.0)
    res = cbs_extrapolate(p, q, reference_cbs=-1.0)
    assert res.correlation == pytest.approx(corr_inf, abs=1e-9)
    assert res.slope == pytest.approx(slope, abs=1e-7)


def test_cbs_statistical_error_propagation():
    p = BasisSeriesPoint(3, -150.1, -149.6, error=0.001)
    q = BasisSeriesPoint(4, -150.2, -149.6, error=0.002)
    res = cbs_extrapolate(p, q, -149.7)
    assert res.stat_error == pytest.approx(math.hypot(27 * 0.001, 64 * 0.002) / 37)


def test_cbs_input_validation():
    p = BasisSeriesPoint(3, -1.0, -0.5)
    with pytest.raises(ValueError):
        cbs_extrapolate(p, BasisSeriesPoint(3, -1.1, -0.5), -0.5)
    with pytest.raises(ValueError):
        cbs_extrapolate(p, BasisSeriesPoint(4, -1.1, -0.5), None)
    with pytest.raises(ValueError):
        BasisSeriesPoint(1, -1.0, -0.5)
    with pytest.raises(ValueError):
        BasisSeriesPoint(3, -1.0, -0.5, error=-1.0)


def test_relative_energy_weights_and_errors():
    o2 = SpeciesEnergy("3O2", -150.0, 0.001)
    o3 = SpeciesEnergy("O3", -224.9, 0.002, weight=Fraction(3, 2))
    de, err = relative_energy(o3, o2)
    assert de == pytest.approx(0.1 * HARTREE_TO_KJMOL)
    assert err == pytest.approx(math.hypot(0.002, 1.5 * 0.001) * HARTREE_TO_KJMOL)
    with pytest.raises(ValueError):
        relative_energy(SpeciesEnergy("O3", 140.0, unit="kJ/mol"), o2)
    with pytest.raises(ValueError):
        SpeciesEnergy("x", -1.0, weight=0)


def test_zpve_correction_for_ozone():
    res = zpve_correct(142.7, {"O3": 0.0064, "3O2": 0.0037}, {"O3": 1, "3O2": -1.5})
    assert res.delta_zpve == pytest.approx(0.00085)
    assert round(res.delta_zpve_kjmol, 1) == 2.2
    assert res.corrected == pytest.approx(142.7 - 0.00085 * HARTREE_TO_KJMOL)
    with pytest.raises(KeyError):
        zpve_correct(142.7, {"O3": 0.0064}, {"O3": 1, "3O2": -1.5})


@pytest.mark.parametrize(
    "text, value, error",
    [("-149.9827(7)", -149.9827, 0.0007), ("-150.2884", -150.2884, 0.0), ("−1.5(12)", -1.5, 1.2), ("3(2)", 3.0, 2.0)],
)
def test_parse_uncertain(text, value, error):
    v, e = parse_uncertain(text)
    assert v == value and e == pytest.approx(error)


def test_parse_uncertain_rejects_garbage():
    with pytest.raises(ValueError):
        parse_uncertain("abc")


def test_energy_csv_round_trip(tmp_path):
    recs = [EnergyRecord("CCSD(T)", "3O2", "TZ", -150.1536, 0.0, {"geometry": "exp"})]
    write_energy_csv(recs, tmp_path / "e.csv")
    back = read_energy_csv(tmp_path / "e.csv")
    assert back == recs


@pytest.mark.parametrize(
    "text",
    ["", "method,species,basis,energy\nA,B,C,1.0\n", "method,species,basis,energy,error\nA,B,C,x,\n",
     "method,species,basis,energy,error\nA,B,C,nan,\n", "method,species,basis,energy,error\n"],
)
def test_energy_csv_rejects_malformed(text):
    with pytest.raises(ValueError):
        read_energy_csv(io.StringIO(text))


def test_bundled_tables_are_complete():
    recs = load_reference_energies()
    printed = load_reference_relative()
    fixes = load_reference_corrections()
    assert len(fixes) == 2
    assert len(printed) == 62
    assert {r.extra["geometry"] for r in recs} == {"exp", "dft"}


def test_corrections_must_match_tabulated_value():
    recs = load_reference_energies()
    bad = [{**load_reference_corrections()[0], "printed": "-1.0"}]
    with pytest.raises(ValueError):
        apply_corrections(recs, bad)


def test_recomputed_relative_energies_are_within_rounding_of_printed():
    recs = apply_corrections(load_reference_energies(), load_reference_corrections())
    rows = compare_with_printed(relative_energy_table(recs), load_reference_relative())
    assert len(rows) == 62
    # totals carry four decimals: each is good to 5e-5 Ha; printed deltas to 0.05 kJ/mol
    for r in rows:
        weight = 1.5 if r["species"] == "O3" else 1.0
        envelope = (1 + weight) * 5e-5 * HARTREE_TO_KJMOL + 0.05
        assert abs(r["deviation"]) <= envelope, r


def test_uncorrected_typos_show_up_as_gross_deviations():
    rows = compare_with_printed(relative_energy_table(load_reference_energies()), load_reference_relative())
    gross = [r for r in rows if abs(r["deviation"]) > 100]
    assert {(r["geometry"], r["method"], r["basis"], r["species"]) for r in gross} >= {
        ("exp", "NEVPT2", "QZ", "O3"),
    }


def test_relative_table_requires_weights():
    recs = [EnergyRecord("m", "3O2", "TZ", -1.0), EnergyRecord("m", "X", "TZ", -0.9)]
    with pytest.raises(KeyError):
        relative_energy_table(recs)


def test_compare_with_printed_missing_row():
    with pytest.raises(KeyError):
        compare_with_printed([], [{"geometry": "exp", "method": "m", "basis": "b", "species": "s", "delta_kjmol": "1"}])


def test_report_provenance(tmp_path):
    src = tmp_path / "in.csv"
    src.write_text("x\n")
    doc = write_report({"value": Fraction(3, 2)}, tmp_path / "r.json", inputs=[src])
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["provenance"]["inputs"][0]["sha256"] == doc["provenance"]["inputs"][0]["sha256"]
    assert len(data["provenance"]["inputs"][0]["sha256"]) == 64
