import numpy as np
import pytest

from muscletract.cli import main
from muscletract.formats import (
    load_density,
    load_field,
    load_mask,
    load_streamlines,
    read_csv,
    save_mask,
    save_streamlines,
)
from muscletract.grid import VoxelMask
from muscletract.streamline import Streamline, StreamlineSet


def run(args):
    return main([str(a) for a in args])


@pytest.fixture
def phantom_files(tmp_path):
    mask = tmp_path / "m.mskv"
    field = tmp_path / "f.ornt"
    truth = tmp_path / "t.txt"
    code = run([
        "phantom", "--shape", "box", "--pennation", "10", "--dims", "14x10x40",
        "--out-mask", mask, "--out-field", field, "--out-truth", truth,
    ])
    assert code == 0
    return mask, field, truth


class TestPhantomCommand:
    def test_writes_all_artifacts(self, phantom_files):
        mask, field, truth = phantom_files
        m = load_mask(mask)
        assert m.dims == (14, 10, 40)
        text = truth.read_text()
        assert "fiber_length_mm=" in text
        assert "seed=" in text

    def test_zero_pennation_field(self, tmp_path):
        run([
            "phantom", "--pennation", "0", "--dims", "8x8x20",
            "--out-mask", tmp_path / "m.mskv", "--out-field", tmp_path / "f.ornt",
            "--out-truth", tmp_path / "t.txt",
        ])
        f = load_field(tmp_path / "f.ornt")
        inside = f.fa > 0
        assert np.allclose(f.directions[inside], [0.0, 0.0, 1.0], atol=1e-6)

    def test_mask_round_trip_byte_exact(self, phantom_files, tmp_path):
        mask, _, _ = phantom_files
        resaved = tmp_path / "resaved.mskv"
        save_mask(resaved, load_mask(mask))
        assert mask.read_bytes() == resaved.read_bytes()


class TestTrackAndFilter:
    def test_track_then_fss(self, phantom_files, tmp_path):
        mask, field, _ = phantom_files
        cand = tmp_path / "cand.strl"
        code = run([
            "track", "--field", field, "--mask", mask, "--strategy", "3ds",
            "--spacing", "2", "--out", cand,
        ])
        assert code == 0
        n = len(load_streamlines(cand))
        assert n > 100

        out = tmp_path / "fss.strl"
        trace = tmp_path / "trace.csv"
        code = run([
            "filter", "--method", "fss", "-k", "50", "--candidates", cand,
            "--mask", mask, "--trace", trace, "--out", out,
        ])
        assert code == 0
        assert len(load_streamlines(out)) == 50
        header, rows = read_csv(trace)
        assert header == ["step", "id", "selection_distance_mm"]
        assert len(rows) == 50

    def test_fss_exhaustion_is_permutation(self, phantom_files, tmp_path):
        mask, field, _ = phantom_files
        cand = tmp_path / "cand.strl"
        run([
            "track", "--field", field, "--mask", mask, "--strategy", "3ds",
            "--spacing", "3", "--out", cand,
        ])
        n = len(load_streamlines(cand))
        out = tmp_path / "all.strl"
        code = run([
            "filter", "--method", "fss", "-k", n, "--candidates", cand,
            "--mask", mask, "--out", out,
        ])
        assert code == 0
        got = load_streamlines(out)
        assert len(got) == n
        key = lambda sset: sorted(tuple(map(tuple, s.points)) for s in sset)
        assert key(got) == key(load_streamlines(cand))

    def test_reseed_methods_exact_k(self, phantom_files, tmp_path):
        mask, field, _ = phantom_files
        for method in ("2ds", "3ds"):
            out = tmp_path / f"{method}.strl"
            code = run([
                "filter", "--method", method, "-k", "40", "--mask", mask,
                "--field", field, "--spacing", "2", "--out", out,
            ])
            assert code == 0
            assert len(load_streamlines(out)) == 40

    def test_k_exceeding_candidates_exits_3(self, phantom_files, tmp_path):
        mask, field, _ = phantom_files
        cand = tmp_path / "cand.strl"
        run([
            "track", "--field", field, "--mask", mask, "--strategy", "3ds",
            "--spacing", "3", "--out", cand,
        ])
        n = len(load_streamlines(cand))
        code = run([
            "filter", "--method", "fss", "-k", n + 1, "--candidates", cand,
            "--mask", mask, "--out", tmp_path / "x.strl",
        ])
        assert code == 3


class TestMetricsCommand:
    def test_hand_authored_three_streamline_case(self, tmp_path):
        # 4^3 mask, three hand-built streamlines; SC/SD/SDCV enumerated by hand
        mask_path = tmp_path / "m.mskv"
        save_mask(mask_path, VoxelMask(np.ones((4, 4, 4), dtype=bool)))
        sls = StreamlineSet([
            Streamline([(0.5, 0.5, 0.5), (3.5, 0.5, 0.5)], 0),  # 4 voxels along x
            Streamline([(0.5, 0.5, 0.5), (0.5, 3.5, 0.5)], 1),  # 4 voxels along y
            Streamline([(0.5, 0.5, 0.5), (0.5, 0.5, 3.5)], 2),  # 4 voxels along z
        ])
        strl_path = tmp_path / "s.strl"
        save_streamlines(strl_path, sls)
        out_csv = tmp_path / "metrics.csv"
        out_dens = tmp_path / "d.dens"
        code = run([
            "metrics", "--streamlines", strl_path, "--mask", mask_path,
            "--out-csv", out_csv, "--out-density", out_dens,
        ])
        assert code == 0
        header, rows = read_csv(out_csv)
        vals = dict(zip(header, rows[0]))
        # 10 distinct crossed voxels of 64; corner voxel counted 3 times
        assert float(vals["sc"]) == pytest.approx(10 / 64)
        assert float(vals["sd_mean"]) == pytest.approx(12 / 64)
        counts = [3] + [1] * 9 + [0] * 54
        mean = np.mean(counts)
        want_sdcv = np.std(counts) / mean
        assert float(vals["sdcv"]) == pytest.approx(want_sdcv, rel=1e-8)  # 9 sig digits in CSV
        dens = load_density(out_dens)
        assert dens.counts[0, 0, 0] == 3.0
        assert dens.counts.sum() == 12.0

    def test_frame_mismatch_exits_3(self, tmp_path):
        mask_path = tmp_path / "m.mskv"
        save_mask(mask_path, VoxelMask(np.ones((4, 4, 4), dtype=bool)))
        far = StreamlineSet([Streamline([(100.0, 100.0, 100.0), (101.0, 100.0, 100.0)], 0)])
        strl_path = tmp_path / "far.strl"
        save_streamlines(strl_path, far)
        code = run([
            "metrics", "--streamlines", strl_path, "--mask", mask_path,
            "--out-csv", tmp_path / "x.csv",
        ])
        assert code == 3


class TestArchCommand:
    def test_emits_row(self, phantom_files, tmp_path):
        mask, field, _ = phantom_files
        strl = tmp_path / "s.strl"
        run([
            "filter", "--method", "3ds", "-k", "60", "--mask", mask,
            "--field", field, "--spacing", "2", "--out", strl,
        ])
        out = tmp_path / "arch.csv"
        code = run([
            "arch", "--streamlines", strl, "--mask", mask, "--name", "demo", "--out", out,
        ])
        assert code == 0
        header, rows = read_csv(out)
        row = dict(zip(header, rows[0]))
        assert row["name"] == "demo"
        assert float(row["mv_mm3"]) == 14 * 10 * 40
        assert row["arch_type"] in ("pennate", "non_pennate")
        assert float(row["fl_ml_ratio"]) == pytest.approx(
            float(row["fl_median_mm"]) / float(row["ml_mm"]), rel=1e-8
        )


def _fake_run_dir(tmp_path, name, sc, sdcv, fl):
    import muscletract.formats as fmts

    d = tmp_path / name
    d.mkdir()
    fmts.write_csv(d / "metrics.csv", ["sc", "sd_mean", "sdcv", "sdcv_defined"], [[sc, 1.0, sdcv, 1]])
    fmts.write_csv(
        d / "arch.csv",
        ["name", "mv_mm3", "fl_median_mm", "ml_mm", "fl_ml_ratio", "pa_median_deg",
         "pcsa_mm2", "loa_x", "loa_y", "loa_z", "r2", "loa_source", "arch_type"],
        [["m", 1000.0, fl, 60.0, fl / 60.0, 10.0, 1000.0 * 0.98 / fl, 0.0, 0.0, 1.0,
          0.95, "endpoint_fit", "pennate"]],
    )
    save_mask(d / "mask.mskv", VoxelMask(np.ones((4, 4, 4), dtype=bool)))
    return d


class TestCompareCommand:
    def test_identical_runs_zero_differences(self, tmp_path):
        a0 = _fake_run_dir(tmp_path, "a0", 0.9, 0.3, 50.0)
        a1 = _fake_run_dir(tmp_path, "a1", 0.8, 0.4, 55.0)
        b0 = _fake_run_dir(tmp_path, "b0", 0.9, 0.3, 50.0)
        b1 = _fake_run_dir(tmp_path, "b1", 0.8, 0.4, 55.0)
        out = tmp_path / "cmp.csv"
        code = run([
            "compare", f"fss:0:{a0}", f"fss:1:{a1}", f"3ds:0:{b0}", f"3ds:1:{b1}",
            "--out", out,
        ])
        assert code == 0
        header, rows = read_csv(out)
        by_kind = {}
        for row in rows:
            by_kind.setdefault(row[0], []).append(row)
        for row in by_kind["pct_diff"]:
            assert all(float(v) == 0.0 for v in row[3:])
        for row in by_kind["t_stat"]:
            assert all(float(v) == 0.0 for v in row[3:])
        for row in by_kind["p_value"]:
            assert all(float(v) == 1.0 for v in row[3:])

    def test_different_runs_report_direction(self, tmp_path):
        a0 = _fake_run_dir(tmp_path, "a0", 0.95, 0.30, 45.0)
        a1 = _fake_run_dir(tmp_path, "a1", 0.93, 0.32, 46.0)
        b0 = _fake_run_dir(tmp_path, "b0", 0.85, 0.40, 50.0)
        b1 = _fake_run_dir(tmp_path, "b1", 0.84, 0.42, 52.0)
        out = tmp_path / "cmp.csv"
        code = run([
            "compare", f"fss:0:{a0}", f"fss:1:{a1}", f"3ds:0:{b0}", f"3ds:1:{b1}",
            "--out", out,
        ])
        assert code == 0
        header, rows = read_csv(out)
        pct = next(r for r in rows if r[0] == "pct_diff")
        cols = dict(zip(header, pct))
        assert cols["method"] == "3ds-vs-fss"  # pairs are ordered alphabetically
        assert float(cols["sc"]) < 0  # fss covers more
        assert float(cols["sdcv"]) > 0  # fss less non-uniform
        assert float(cols["fl_median"]) > 0  # fss shorter fibers

    def test_single_method_rejected(self, tmp_path):
        a0 = _fake_run_dir(tmp_path, "a0", 0.9, 0.3, 50.0)
        code = run(["compare", f"fss:0:{a0}", "--out", tmp_path / "c.csv"])
        assert code == 3


class TestFractionsCommand:
    def test_sums_to_one(self, tmp_path):
        import muscletract.formats as fmts

        arch_csv = tmp_path / "arch.csv"
        header = ["name", "mv_mm3", "fl_median_mm", "ml_mm", "fl_ml_ratio",
                  "pa_median_deg", "pcsa_mm2", "loa_x", "loa_y", "loa_z", "r2",
                  "loa_source", "arch_type"]
        rows = [
            ["fcr", 100.0, 30.0, 60.0, 0.5, 10.0, 3.0, 0.0, 0.0, 1.0, 0.95, "endpoint_fit", "pennate"],
            ["fcu", 300.0, 35.0, 65.0, 0.54, 12.0, 8.0, 0.0, 0.0, 1.0, 0.96, "endpoint_fit", "pennate"],
            ["edc", 200.0, 40.0, 70.0, 0.57, 8.0, 5.0, 0.0, 0.0, 1.0, 0.92, "endpoint_fit", "pennate"],
        ]
        fmts.write_csv(arch_csv, header, rows)
        groups = tmp_path / "groups.txt"
        groups.write_text("fcr=wrist_flexors\nfcu=wrist_flexors\nedc=finger_extensors\n")
        out = tmp_path / "fr.csv"
        code = run(["fractions", arch_csv, "--groups", groups, "--out", out])
        assert code == 0
        _, rows = read_csv(out)
        vol = [float(r[3]) for r in rows if r[0] == "volume_fraction"]
        assert sum(vol) == pytest.approx(1.0, abs=1e-12)
        for group in ("wrist_flexors", "finger_extensors"):
            pcsa = [float(r[3]) for r in rows if r[0] == "pcsa_fraction" and r[1] == group]
            assert sum(pcsa) == pytest.approx(1.0, abs=1e-12)

    def test_missing_muscle_rejected(self, tmp_path):
        import muscletract.formats as fmts

        arch_csv = tmp_path / "arch.csv"
        fmts.write_csv(
            arch_csv,
            ["name", "mv_mm3", "fl_median_mm", "ml_mm", "fl_ml_ratio", "pa_median_deg",
             "pcsa_mm2", "loa_x", "loa_y", "loa_z", "r2", "loa_source", "arch_type"],
            [["pl", 100.0, 30.0, 60.0, 0.5, 10.0, 3.0, 0.0, 0.0, 1.0, 0.95, "endpoint_fit", "pennate"]],
        )
        groups = tmp_path / "groups.txt"
        groups.write_text("other=flexors\n")
        code = run(["fractions", arch_csv, "--groups", groups, "--out", tmp_path / "o.csv"])
        assert code == 3


class TestExitCodes:
    def test_usage_error_is_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["phantom", "--shape", "pyramid", "--out-mask", "x", "--out-field", "y", "--out-truth", "z"])
        assert exc.value.code == 2

    def test_missing_file_is_3(self, tmp_path):
        code = run([
            "metrics", "--streamlines", tmp_path / "missing.strl",
            "--mask", tmp_path / "missing.mskv", "--out-csv", tmp_path / "m.csv",
        ])
        assert code == 3

    def test_degenerate_data_is_4(self, tmp_path):
        mask_path = tmp_path / "m.mskv"
        save_mask(mask_path, VoxelMask(np.ones((4, 4, 4), dtype=bool)))
        sls = StreamlineSet([
            Streamline([(1.0, 1.0, 1.0), (2.0, 1.0, 1.0)], 0),
            Streamline([(1.0, 1.0, 1.0), (2.0, 1.0, 1.0)], 1),
        ])
        strl = tmp_path / "two.strl"
        save_streamlines(strl, sls)
        code = run(["arch", "--streamlines", strl, "--mask", mask_path, "--out", tmp_path / "a.csv"])
        assert code == 4

    def test_run_config_flows_through(self, phantom_files, tmp_path):
        mask, field, _ = phantom_files
        cfg = tmp_path / "run.cfg"
        cfg.write_text("spacing_mm=3\nmin_length_mm=5\n")
        out = tmp_path / "c.strl"
        code = run([
            "track", "--field", field, "--mask", mask, "--strategy", "3ds",
            "--config", cfg, "--out", out,
        ])
        assert code == 0
        assert len(load_streamlines(out)) > 0
