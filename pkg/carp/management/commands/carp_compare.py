import csv

from django.utils.translation import gettext as _

from carp.dataio import load_labels
from carp.exceptions import LengthError
from carp.management.base import CarpCommand
from carp.metrics import BASELINES, baseline_partition, compare_partitions
from carp.paths import PathConfig, carp_viz_path
from carp.utils import format_float


class Command(CarpCommand):
    help = _(
        "Scores a CARP-VIZ dendrogram cut and standard clusterings against "
        "known labels."
    )

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_data_arguments(parser)
        self.add_graph_arguments(parser)
        parser.add_argument("--rho", type=float, default=None)
        parser.add_argument("--labels", required=True, help=_("label,cluster CSV."))
        parser.add_argument("--k", type=int, default=None, help=_("Clusters (default: true k)."))
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument(
            "--methods",
            default=",".join(BASELINES),
            help=_("Comma separated baselines."),
        )

    def run(self, manifest, out_dir, **options):
        data = self.load_data(manifest, options)
        truth = load_labels(options["labels"])
        if len(truth) != data.n:
            raise LengthError(_("The labels do not match the data rows."))
        k = options["k"] or truth.k
        manifest.seed = options["seed"]

        graph = self.build_graph(manifest, data, options)
        partitions = {}
        with manifest.timer("carp"):
            tree = carp_viz_path(data, graph, config=PathConfig()).to_dendrogram()
            partitions["carp"] = tree.cut(k)
        with manifest.timer("baselines"):
            for method in filter(None, options["methods"].split(",")):
                partitions[method] = baseline_partition(data, k, method.strip(), options["seed"])

        rows = compare_partitions(truth, partitions)
        with open(self.output(manifest, out_dir, options, "compare.csv"), "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(("method", "k", "rand", "adjusted_rand", "jaccard"))
            for row in rows:
                writer.writerow(
                    (
                        row["method"],
                        row["k"],
                        format_float(row["rand"]),
                        format_float(row["adjusted_rand"]),
                        format_float(row["jaccard"]),
                    )
                )
        manifest.metrics.update({row["method"]: row["adjusted_rand"] for row in rows})
