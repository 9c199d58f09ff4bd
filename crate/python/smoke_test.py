"""Smoke test for the boundbench extension module."""

import math
import pathlib
import tempfile

import boundbench as bb

ROOT = pathlib.Path(__file__).resolve().parent.parent
CORPUS = ROOT / "crates" / "core" / "data" / "desk_corpus.pgn"


def check_pgn():
    games, diagnostics = bb.parse_pgn(CORPUS.read_text())
    assert len(games) == 10 and not diagnostics, (len(games), diagnostics)
    g = games[0]
    assert len(g) == len(g.moves()) > 0
    again, _ = bb.parse_pgn(g.to_pgn())
    assert again[0].moves() == g.moves()
    assert g.time_control is not None
    print(f"pgn: {len(games)} games, first {g!r}")


def check_measures():
    fen = "r1b1kbnr/pppp1ppp/2n5/4p3/4P3/5N2/PPPP1PPP/RNBQKB1R b KQkq - 3 3"
    p = bb.move_performance(fen, [("c6b4", -95), ("c6d4", -120)], "f8c5", after_cp=114)
    assert abs(p - (-0.19)) < 1e-12, p
    assert bb.move_performance(fen, [("c6b4", -95), ("c6d4", -120)], "c6b4") == 0.0
    delta, e, pos, neg, c, l = bb.delta_family(-19, -40)
    assert (e, pos, neg, c) == (1, 1, 0, 1) and abs(delta - 0.21) < 1e-12
    assert abs(l - math.log1p(0.21)) < 1e-12
    assert abs(bb.log_modulus(1.0) - math.log(2.0)) < 1e-15
    assert bb.log_modulus(-2.5) == -bb.log_modulus(2.5)
    print(f"measures: P = {p}")


def check_econometrics():
    frame = bb.simulate_panel("extensive", replication=0, seed=5, n_games=40)
    assert frame.n_rows > 0 and "delta_E" in frame.columns
    f = bb.fit(frame, "delta_E", ["better_pos", "worse_pos"])
    est, se = f.coefficient("better_pos")
    assert est > 0 and se > 0
    ols = bb.fit(frame, "delta_E", ["better_pos"], fixed_effects=False)
    assert ols.n_obs == f.n_obs and ols.coefficient("better_pos") is not None
    print(f"fit: better_pos {est:.3f} ({se:.3f}), n = {f.n_obs}, clusters = {f.n_clusters}")
    text, summary = bb.validate_identification("null", replications=20, seed=3, n_games=30)
    assert "passed" in text
    assert "table2" in bb.table_names()
    print("validate_identification: ok")


def check_pipeline():
    with tempfile.TemporaryDirectory() as tmp:
        p = bb.Pipeline(pathlib.Path(tmp) / "run")
        up_to_date, counts, _ = p.simulate(agent="extensive", replications=5, seed=1)
        assert not up_to_date and dict(counts)
        assert p.simulate(agent="extensive", replications=5, seed=1)[0]
        assert len(p.run_hash) == 64
        try:
            p.measures()
        except RuntimeError as e:
            assert "ingest" in str(e)
        else:
            raise AssertionError("measures without ingest should fail")
    print("pipeline: ok")


if __name__ == "__main__":
    check_pgn()
    check_measures()
    check_econometrics()
    check_pipeline()
    print("smoke test passed")
