import pytest

from presymplectic_strata.core.commands import BUILTIN_MODELS, COMMANDS, resolve_manifest, run
from presymplectic_strata.core.config import REPORT_HEADER, Settings
from presymplectic_strata.core.manifest import parse_manifest
from presymplectic_strata.core.reporting import render_report
from presymplectic_strata.errors import ManifestError
from presymplectic_strata.services.geometry.whitney import Verdict


@pytest.fixture
def settings():
    return Settings()


def model(name):
    return resolve_manifest(model=name)


class TestResolveManifest:
    def test_every_model_parses(self):
        for name in BUILTIN_MODELS:
            assert model(name).form("omega").degree == 2

    def test_unknown_model(self):
        with pytest.raises(ManifestError) as excinfo:
            model("r5flat")
        assert "r3flat" in excinfo.value.expected

    def test_model_and_path_exclusive(self, tmp_path):
        with pytest.raises(ValueError):
            resolve_manifest("r3flat", tmp_path / "x.strata")

    def test_nothing_given(self):
        assert resolve_manifest() is None


class TestRun:
    def test_every_command_is_dispatched(self):
        assert sorted(COMMANDS) == sorted(
            [
                "dims",
                "stratify",
                "whitney",
                "realize",
                "gotay",
                "linf-verify",
                "mc",
                "connection",
                "moser",
                "gauge",
                "glue",
                "directed-check",
            ]
        )

    def test_unknown_command(self, settings):
        with pytest.raises(ValueError):
            run("census", None, {}, settings)

    def test_report_materializes_settings_and_seed(self, settings):
        report = run("dims", None, {"N": 3, "seed": 11}, settings)
        assert report.header == REPORT_HEADER
        assert report.arguments == {"N": "3", "seed": "11"}
        assert report.settings["app"]["jets"]["max_arity"] == settings.app.jets.max_arity
        assert report.provenance["seed"] == "11"

    def test_default_seed_from_settings(self, settings):
        report = run("dims", None, {"N": 3}, settings)
        assert report.provenance["seed"] == str(settings.effective_seed)

    def test_reports_are_deterministic(self, settings):
        first = render_report(run("dims", None, {"N": 4, "oracle": True}, settings))
        second = render_report(run("dims", None, {"N": 4, "oracle": True}, settings))
        assert first == second

    def test_manifest_parameters_fill_options(self, settings):
        manifest = parse_manifest("# presymplectic-strata manifest v1\nchart x1\nset N = 3\n")
        report = run("dims", manifest, {}, settings)
        assert report.records["N"] == 3

    def test_command_needing_a_manifest(self, settings):
        with pytest.raises(ManifestError, match="manifest"):
            run("gotay", None, {}, settings)


class TestDims:
    def test_four_dimensional_table(self, settings):
        report = run("dims", None, {"N": 4}, settings)
        rows = {row["m"]: row for row in report.records["strata"]}
        assert sorted(rows) == [0, 1, 2, 3, 4]
        assert (rows[0]["dim"], rows[2]["dim"], rows[4]["dim"]) == (6, 5, 0)
        assert rows[2]["codim"] == 1
        assert rows[1]["empty"] and rows[3]["empty"]
        assert report.passed and report.exit_code == 0
        assert "strata" in report.tables

    def test_oracle_agrees(self, settings):
        report = run("dims", None, {"N": 5, "oracle": True}, settings)
        assert report.passed
        assert all(row["oracle"] == row["dim"] for row in report.records["strata"] if not row["empty"])


class TestRealize:
    def test_planar_value(self, settings):
        report = run("realize", None, {"Q": "0,1;-1,0"}, settings)
        assert report.passed
        assert report.records["value_matches"]
        assert report.records["pfaffian"] == "1"

    def test_value_at_a_point(self, settings):
        report = run("realize", None, {"Q": "0,1/2,0;-1/2,0,3;0,-3,0", "point": "1,2,3"}, settings)
        assert report.passed
        assert report.records["nullity"] == 1

    def test_non_skew_matrix_is_an_input_error(self, settings):
        with pytest.raises(ValueError):
            run("realize", None, {"Q": "0,1;1,0"}, settings)


class TestGotay:
    def test_flat_model(self, settings):
        report = run("gotay", model("r3flat"), {}, settings)
        assert report.passed
        assert report.records["virtual_dim"] == 1
        assert [s.after for s in report.records["stabilization"]] == [1, 1, 1]


class TestLinfVerify:
    def test_flat_model_passes(self, settings):
        report = run("linf-verify", model("r3flat"), {"arity": 3, "trials": 1}, settings)
        assert report.passed
        assert report.records["strict"]

    @pytest.mark.slow
    def test_flat_model_to_arity_four(self, settings):
        report = run("linf-verify", model("r3flat"), {"arity": 4}, settings)
        assert report.exit_code == 0


class TestMaurerCartan:
    def test_zero_section_is_coisotropic(self, settings):
        report = run("mc", model("r3flat"), {"arity": 2}, settings)
        assert report.passed
        assert report.records["maurer_cartan"].coisotropic


class TestConnection:
    def test_nondegenerate_point_is_parallel(self, settings):
        report = run("connection", model("model4"), {"point": "1, 0, 0, 0"}, settings)
        assert report.records["kernel_dim"] == 0
        assert report.records["parallel"]
        assert report.passed


class TestGauge:
    def test_shear_on_flat_model(self, settings):
        options = {"xi": "x2*d/dx1", "delta": "d/dx2^d/dx3", "steps": 2}
        report = run("gauge", model("r3flat"), options, settings)
        gauge = report.records["gauge"]
        assert gauge.phi_identity_at_zero
        assert gauge.kernel_preserved
        assert report.passed

    def test_xi_is_required(self, settings):
        with pytest.raises(ValueError, match="xi"):
            run("gauge", model("r3flat"), {}, settings)


class TestGlue:
    def test_flat_pair_is_a_chain_map(self, settings):
        options = {"lower": "omega_s", "higher": "omega", "tube": "T_sr"}
        report = run("glue", model("r4triple"), options, settings)
        assert report.records["morphism"].chain_map
        assert report.passed

    def test_composition(self, settings):
        options = {
            "lower": "omega_p",
            "middle": "omega_s",
            "higher": "omega",
            "tube": "T_pr",
            "lower_tube": "T_ps",
            "upper_tube": "T_sr",
        }
        report = run("glue", model("r4triple"), options, settings)
        assert report.records["composition"].holds
        assert report.passed


class TestDirectedCheck:
    def test_unit_constants(self, settings):
        report = run("directed-check", None, {"c": "1", "C": "1"}, settings)
        assert report.records["directedness"].directed
        assert report.exit_code == 0


@pytest.mark.slow
class TestNumericCommands:
    def test_model_census(self, settings):
        report = run("stratify", model("model4"), {"box": "B", "samples": 10, "seed": 7}, settings)
        assert sorted(s.m for s in report.records["census"].strata) == [0, 2]

    def test_cusp_fails_condition_b(self, settings):
        report = run("whitney", None, {"cusp": True}, settings)
        assert report.records["whitney"].condition_b is Verdict.FAIL
        assert report.exit_code == 1

    def test_area_family(self, settings, tmp_path):
        csv = tmp_path / "flow.csv"
        report = run("moser", None, {"family": "area", "samples": 10, "steps": 16, "csv": str(csv)}, settings)
        assert report.passed
        assert csv.is_file()

    def test_model_gluing_family(self, settings):
        report = run("moser", model("model4"), {"samples": 20, "steps": 8}, settings)
        assert report.records["rescaling"].exponential
        assert report.passed
