import pytest

from smoothfem.cli import (CliError, ExperimentConfig, load_config, main)

FAST = ["--n", "2,4", "--seed", "1"]


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ---------------------------------------------------------------------------
# configuration

def test_load_config_roundtrip(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(
        "# block study\n"
        "problem = block\n"
        "domain = 0 0 2 1\n"
        "E = 1e3\n"
        "nu = 0.2\n"
        "pattern = slash\n"
        "n = 2 4 8\n"
        "methods = fem_t3, sse\n"
        "reference_n = 32\n")
    config = load_config(path)
    assert config.pattern == "slash"
    assert config.n == (2, 4, 8)
    assert config.methods == ("fem_t3", "sse")


@pytest.mark.parametrize("line,fragment", [
    ("pattern = zigzag", "pattern"),
    ("n = 4 2", "increasing"),
    ("n = 2 4\nreference_n = 4", "reference_n"),
    ("methods = fem_t5", "unknown methods"),
    ("distortion = 0.7", "distortion"),
    ("speed = 9", "unknown key"),
    ("nonsense line", "key = value"),
])
def test_config_validation_messages(tmp_path, line, fragment):
    path = tmp_path / "exp.cfg"
    path.write_text(line + "\n")
    with pytest.raises(CliError, match=fragment):
        load_config(path)


def test_default_config_valid():
    ExperimentConfig().validate()


# ---------------------------------------------------------------------------
# commands

def test_verify_command_passes(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "verify", "--out", str(tmp_path), "--n", "2",
                           "--method", "fem_t3,esfem,sse,csfem")
    assert code == 0
    assert "fail" not in out
    assert (tmp_path / "verify.csv").exists()


def test_equivalence_command(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "equivalence-check", "--out", str(tmp_path), *FAST)
    assert code == 0
    content = (tmp_path / "equivalence.csv").read_text()
    assert "quad_parallelogram" in content
    assert "reported" in content  # distorted quads are reported, not gated


def test_convergence_command_and_determinism(tmp_path, capsys):
    args = ["convergence", "--out", str(tmp_path), "--n", "2,4",
            "--method", "fem_t3,sse"]
    code, _, _ = run_cli(capsys, *args)
    assert code == 0
    first = (tmp_path / "convergence.csv").read_bytes()
    svg = (tmp_path / "convergence_t3.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg
    code, _, _ = run_cli(capsys, *args)
    assert code == 0
    assert (tmp_path / "convergence.csv").read_bytes() == first


def test_convergence_parallel_matches_sequential(tmp_path, capsys):
    base = ["convergence", "--n", "2,4", "--method", "fem_t3,sse"]
    run_cli(capsys, *base, "--out", str(tmp_path / "seq"))
    run_cli(capsys, *base, "--out", str(tmp_path / "par"), "--parallel")
    seq = (tmp_path / "seq" / "convergence.csv").read_text().splitlines()
    par = (tmp_path / "par" / "convergence.csv").read_text().splitlines()
    # wall-time-free columns must agree row by row
    assert len(seq) == len(par)
    for a, b in zip(seq, par):
        assert a == b


def test_convergence_single_n_emits_no_slope(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "convergence", "--out", str(tmp_path), "--n", "2",
                         "--method", "fem_t3")
    assert code == 0
    lines = (tmp_path / "convergence.csv").read_text().splitlines()
    assert len(lines) == 2
    assert lines[1].endswith(",")  # slope column stays empty


def test_projection_errors_command(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "projection-errors", "--out", str(tmp_path),
                         "--n", "2")
    assert code == 0
    lines = (tmp_path / "projection_errors.csv").read_text().splitlines()
    assert lines[0] == "mesh,regularity,n_or_ne,elementwise,edge_based,interior"
    tri_row = lines[1].split(",")
    vals = [float(v) for v in tri_row[3:]]
    assert vals[2] < vals[0]  # interior approximates best


def test_projection_errors_imported_mesh_rows(tmp_path, capsys):
    mesh_path = tmp_path / "imported.msh"
    code, _, _ = run_cli(capsys, "mesh", "export", "--kind", "quad", "--size", "3",
                         "--distortion", "0.2", "--out", str(mesh_path))
    assert code == 0
    cfg = tmp_path / "imp.cfg"
    cfg.write_text(f"n = 2\nreference_n = 8\ndistortion = 0\n"
                   f"mesh_files = {mesh_path}\n")
    code, _, _ = run_cli(capsys, "projection-errors", "--config", str(cfg),
                         "--out", str(tmp_path))
    assert code == 0
    content = (tmp_path / "projection_errors.csv").read_text()
    assert "q4,imported,9," in content


def test_projection_errors_patch_problem_all_zero(tmp_path, capsys):
    cfg = tmp_path / "patch.cfg"
    cfg.write_text("problem = patch\nn = 2\nreference_n = 4\ndistortion = 0\n")
    code, _, _ = run_cli(capsys, "projection-errors", "--config", str(cfg),
                         "--out", str(tmp_path))
    assert code == 0
    lines = (tmp_path / "projection_errors.csv").read_text().splitlines()[1:]
    for line in lines:
        vals = [float(v) for v in line.split(",")[3:]]
        assert all(v <= 1e-9 for v in vals)


def test_equivalence_failure_exits_nonzero(tmp_path, capsys):
    cfg = tmp_path / "strict.cfg"
    cfg.write_text("tolerance = 1e-30\nn = 2\ndistortion = 0\n")
    code, _, err = run_cli(capsys, "equivalence-check", "--config", str(cfg),
                           "--out", str(tmp_path))
    assert code == 1
    assert err.startswith("error[equivalence]:")


def test_thread_cap_env_var(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SMOOTHFEM_THREADS", "1")
    code, _, _ = run_cli(capsys, "convergence", "--out", str(tmp_path),
                         "--n", "2,4", "--method", "sse", "--parallel")
    assert code == 0
    monkeypatch.setenv("SMOOTHFEM_THREADS", "banana")
    code, _, err = run_cli(capsys, "convergence", "--out", str(tmp_path),
                           "--n", "2,4", "--method", "sse", "--parallel")
    assert code == 2
    assert "SMOOTHFEM_THREADS" in err


def test_unknown_method_exits_with_config_error(tmp_path, capsys):
    code, _, err = run_cli(capsys, "verify", "--out", str(tmp_path),
                           "--method", "fem_t9")
    assert code == 2
    assert err.startswith("error[config]:")


def test_mesh_export_import_roundtrip(tmp_path, capsys):
    path = tmp_path / "m.txt"
    code, out, _ = run_cli(capsys, "mesh", "export", "--kind", "tri",
                           "--size", "3", "--distortion", "0.2", "--out", str(path))
    assert code == 0
    code, out, _ = run_cli(capsys, "mesh", "import", str(path))
    assert code == 0
    assert "valid t3 mesh" in out


def test_mesh_import_malformed_exits_nonzero(tmp_path, capsys):
    path = tmp_path / "bad.txt"
    path.write_text("mesh t3 1 1 1\nv 0 broken here\n")
    code, _, err = run_cli(capsys, "mesh", "import", str(path))
    assert code == 1
    assert err.startswith("error[mesh_io]:")
    assert ":2:" in err
