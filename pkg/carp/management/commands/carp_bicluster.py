from django.core.management.base import CommandError
from django.utils.translation import gettext as _

from carp.bicluster import cbass_path, cbass_viz_path, write_heatmap
from carp.dendrogram import write_merge_table, write_newick
from carp.management.base import CarpCommand
from carp.metrics import dendrogram_recovery
from carp.paths import PathConfig


class Command(CarpCommand):
    help = _(
        "Traces the convex bi-clustering path of a CSV file and writes row and "
        "column dendrograms plus a reordered heatmap."
    )

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_data_arguments(parser)
        self.add_graph_arguments(parser, prefix="row_")
        self.add_graph_arguments(parser, prefix="col_")
        parser.add_argument("--rho", type=float, default=None)
        parser.add_argument("--t", type=float, default=None, help=_("Step-size multiplier."))
        parser.add_argument("--eps", type=float, default=None, help=_("Initial level."))
        parser.add_argument("--norm", default="l2", help=_("l1, l2 or linf."))
        parser.add_argument("--viz", action="store_true")
        parser.add_argument(
            "--row-k", type=int, default=None, help=_("Row clusters of the smoothed heatmap.")
        )
        parser.add_argument(
            "--col-k", type=int, default=None, help=_("Column clusters of the smoothed heatmap.")
        )

    def run(self, manifest, out_dir, **options):
        for prefix in ("row_", "col_"):
            if options[prefix + "k_neighbors"] is not None and options[prefix + "k_neighbors"] < 1:
                raise CommandError(
                    _("The %s graph must be connected: use at least one neighbour.")
                    % prefix.rstrip("_"),
                    returncode=2,
                )

        data = self.load_data(manifest, options)
        row_graph = self.build_graph(manifest, data, options, "row_", "row_weights")
        col_graph = self.build_graph(manifest, data.transpose(), options, "col_", "col_weights")
        config = PathConfig(epsilon=options["eps"], t=options["t"], norm=options["norm"])
        trace = cbass_viz_path if options["viz"] else cbass_path
        with manifest.timer("path"):
            result = trace(data, row_graph, col_graph, config=config)
        with manifest.timer("dendrogram"):
            row_tree = result.rows.to_dendrogram()
            col_tree = result.cols.to_dendrogram()
            ordered, smoothed = result.heatmap(options["row_k"], options["col_k"])

        with manifest.timer("write"):
            result.rows.write_json(self.output(manifest, out_dir, options, "row_path.json"))
            result.cols.write_json(self.output(manifest, out_dir, options, "col_path.json"))
            result.rows.write_events(self.output(manifest, out_dir, options, "row_events.csv"))
            result.cols.write_events(self.output(manifest, out_dir, options, "col_events.csv"))
            write_merge_table(row_tree, self.output(manifest, out_dir, options, "row_merges.csv"))
            write_merge_table(col_tree, self.output(manifest, out_dir, options, "col_merges.csv"))
            write_newick(row_tree, self.output(manifest, out_dir, options, "row_tree.nwk"))
            write_newick(col_tree, self.output(manifest, out_dir, options, "col_tree.nwk"))
            write_heatmap(ordered, self.output(manifest, out_dir, options, "heatmap.csv"))
            if options["row_k"] or options["col_k"]:
                write_heatmap(smoothed, self.output(manifest, out_dir, options, "heatmap_smoothed.csv"))

        manifest.metrics.update(
            {
                "kind": result.rows.kind,
                "steps": result.rows.steps,
                "row_events": len(result.rows.events),
                "col_events": len(result.cols.events),
                "epsilon": result.rows.epsilon,
                "t": result.rows.t,
                "row_recovery": dendrogram_recovery(result.rows, data.n),
                "col_recovery": dendrogram_recovery(result.cols, data.p) if data.p > 1 else 1.0,
            }
        )
