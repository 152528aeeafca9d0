"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criteria 1 to 4 compare against published behaviour and values; their
tolerances are fixed in ``hover_es.reproduce`` and are not relaxed here.
"""

import json

import pytest

from hover_es import reproduce as repro
from hover_es.cli import main
from hover_es.species import BUNDLED_SPECIES, load_species


def report(result, extra=""):
    print("\n" + result.line() + (f"  {extra}" if extra else ""))
    return result


@pytest.fixture(scope="module")
def species():
    return {name: load_species(name) for name in BUNDLED_SPECIES}


@pytest.fixture(scope="module")
def hover_rows(species):
    return repro.hover_runs(species)


class TestAcceptance:
    def test_criterion_1_hover(self, hover_rows):
        res = report(repro.criterion_hover(hover_rows),
                     f"{res_count(hover_rows)} settled; failing: {', '.join(failing(hover_rows)) or 'none'}")
        assert all(r["within_budget"] for r in hover_rows)
        assert res.passed, res.detail

    def test_criterion_2_open_loop(self, species):
        res = repro.criterion_open_loop(species["hawkmoth"])
        d = res.detail
        report(res, f"open loop ok={d['open_loop']['ok']} (w={d['open_loop']['mean_w_tail']}, "
                    f"ramp R2={d['open_loop']['z_ramp_r2']}); closed loop ok={d['closed_loop']['ok']} "
                    f"(diverged={d['closed_loop']['diverged']})")
        assert res.passed, d

    def test_criterion_3_amplitudes(self, hover_rows):
        table = repro.amplitude_table(hover_rows)
        res = repro.criterion_amplitude(table)
        report(res, "; ".join(f"{r['species']} {r['measured']} vs {r['reference']}" for r in table))
        assert res.passed, table

    def test_criterion_4_stability(self, species):
        table = repro.stability_table(species)
        res = repro.criterion_stability(table)
        report(res, f"failing: {', '.join(res.detail['failing']) or 'none'}")
        assert res.passed, [(r["species"], r["objective"], r.get("verdict"), r.get("magnitude_ratios"))
                            for r in table if not r["ok"]]

    def test_criterion_5_smoothing(self, species):
        res = repro.criterion_smoothing(species["hawkmoth"])
        report(res, "RMS error " + json.dumps(res.detail))
        assert res.passed, res.detail

    def test_criterion_6_identities(self, species):
        res = repro.criterion_identities(species)
        worst = max(abs(r["table_identity_residual"]) for r in res.detail["species"])
        report(res, f"largest table identity violation {worst:.3%}")
        assert res.passed, res.detail

    def test_criterion_7_oracles(self):
        res = repro.criterion_oracles()
        report(res, json.dumps(res.detail))
        assert res.passed, res.detail

    def test_criterion_8_determinism(self, tmp_path, capsys):
        outs = []
        for sub in ("first", "second"):
            main(["reproduce", "--output", str(tmp_path / sub)])
            outs.append(((tmp_path / sub / "summary.json").read_bytes(),
                         (tmp_path / sub / "summary.txt").read_bytes()))
        capsys.readouterr()
        res = repro.CriterionResult(8, "reproduce twice gives byte-identical summaries", outs[0] == outs[1])
        with capsys.disabled():
            report(res)
        assert res.passed


def res_count(rows):
    return f"{sum(r['ok'] for r in rows)}/{len(rows)}"


def failing(rows):
    return [f"{r['species']}/{r['objective']}/w0={r['w0']:+g}" for r in rows if not r["ok"]]
