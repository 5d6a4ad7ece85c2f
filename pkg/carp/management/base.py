"""
Shared plumbing of the ``carp_*`` management commands.
"""
import logging
import os
import warnings

from django.core.management.base import BaseCommand, CommandError
from django.utils.translation import gettext as _

from carp.dataio import load_csv, standardize
from carp.exceptions import (
    CarpError,
    CarpWarning,
    DegenerateError,
    DimensionError,
    InvalidParameter,
    LengthError,
    ParseError,
    RangeError,
    ShapeError,
    UnsupportedNorm,
)
from carp.manifest import RunManifest
from carp.settings import get_output_dir
from carp.weights import build_weights


logger = logging.getLogger(__name__)

# exit status 2; every other CarpError exits with 3
USAGE_ERRORS = (
    InvalidParameter,
    ParseError,
    DimensionError,
    DegenerateError,
    ShapeError,
    LengthError,
    RangeError,
    UnsupportedNorm,
    FileNotFoundError,
)

# argparse internals that do not belong in a manifest
HIDDEN_OPTIONS = {
    "verbosity",
    "settings",
    "pythonpath",
    "traceback",
    "no_color",
    "force_color",
    "skip_checks",
    "stdout",
    "stderr",
}


def phi_value(value):
    if value == "auto":
        return value
    try:
        return float(value)
    except ValueError:
        raise InvalidParameter(_("phi must be 'auto' or a number, not %r.") % value) from None


def float_list(value):
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise InvalidParameter(_("Expected a comma separated list of numbers.")) from None


class CarpCommand(BaseCommand):
    """
    Base class of the commands: maps ``carp`` errors to exit codes and writes
    a manifest of every run.

    Subclasses implement ``run(manifest, out_dir, **options)``.
    """

    requires_system_checks = []
    manifest_name = "manifest.json"

    @property
    def command_name(self):
        return self.__module__.rsplit(".", 1)[-1]

    def add_arguments(self, parser):
        parser.add_argument(
            "--out-dir",
            default=None,
            help=_("Directory for the output files (default: CARP_OUTPUT_DIR)."),
        )
        parser.add_argument(
            "--prefix", default="carp", help=_("File name prefix of every output.")
        )

    def add_data_arguments(self, parser):
        parser.add_argument("input", help=_("CSV file with one observation per row."))
        parser.add_argument(
            "--no-header",
            action="store_false",
            dest="has_header",
            help=_("The first line holds data, not column labels."),
        )
        parser.add_argument(
            "--rownames",
            action="store_true",
            help=_("The first column holds row labels."),
        )
        parser.add_argument(
            "--standardize",
            action="store_true",
            help=_("Center and scale every column first."),
        )

    def add_graph_arguments(self, parser, prefix=""):
        flag = "--%s" % prefix.replace("_", "-")
        parser.add_argument(
            flag + "k-neighbors",
            dest=prefix + "k_neighbors",
            type=int,
            default=None,
            help=_("Neighbours per item in the fusion graph (default: max(3, log2 n))."),
        )
        parser.add_argument(
            flag + "phi",
            dest=prefix + "phi",
            default="auto",
            help=_("Gaussian kernel scale, or 'auto'."),
        )

    def load_data(self, manifest, options):
        path = options["input"]
        manifest.hash_input(path)
        with manifest.timer("load"):
            data = load_csv(path, has_header=options["has_header"], has_rownames=options["rownames"])
            if options["standardize"]:
                data = standardize(data)
        return data

    def build_graph(self, manifest, data, options, prefix="", phase="weights"):
        with manifest.timer(phase):
            return build_weights(
                data,
                k_neighbors=options[prefix + "k_neighbors"],
                phi=phi_value(options[prefix + "phi"]),
                rho=options.get("rho"),
            )

    def output(self, manifest, out_dir, options, suffix):
        return manifest.output(out_dir, "%s_%s" % (options["prefix"], suffix))

    def handle(self, *args, **options):
        out_dir = options["out_dir"] or get_output_dir()
        manifest = RunManifest(
            command=self.command_name,
            options={k: v for k, v in options.items() if k not in HIDDEN_OPTIONS},
        )
        try:
            os.makedirs(out_dir, exist_ok=True)
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", CarpWarning)
                run_options = {k: v for k, v in options.items() if k != "out_dir"}
                self.run(manifest, out_dir, **run_options)
        except USAGE_ERRORS as exc:
            raise CommandError(str(exc), returncode=2) from exc
        except CarpError as exc:
            raise CommandError(str(exc), returncode=3) from exc
        manifest.warnings.extend(
            str(w.message) for w in caught if issubclass(w.category, CarpWarning)
        )
        path = manifest.write(out_dir, "%s_%s" % (options["prefix"], self.manifest_name))
        logger.info("%s wrote %d files to %s", self.command_name, len(manifest.outputs) + 1, out_dir)
        if options["verbosity"] > 1:
            self.stdout.write(path)

    def run(self, manifest, out_dir, **options):
        raise NotImplementedError
