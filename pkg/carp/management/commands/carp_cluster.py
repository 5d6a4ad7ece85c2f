from django.utils.translation import gettext as _

from carp.dendrogram import write_merge_table, write_newick
from carp.management.base import CarpCommand
from carp.metrics import dendrogram_recovery
from carp.paths import PathConfig, carp_path, carp_viz_path
from carp.utils import print_debug_info


class Command(CarpCommand):
    help = _(
        "Traces the convex clustering path of a CSV file and writes its events, "
        "dendrogram and Newick tree."
    )

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_data_arguments(parser)
        self.add_graph_arguments(parser)
        parser.add_argument("--rho", type=float, default=None)
        parser.add_argument("--t", type=float, default=None, help=_("Step-size multiplier."))
        parser.add_argument("--eps", type=float, default=None, help=_("Initial level."))
        parser.add_argument("--norm", default="l2", help=_("l1, l2 or linf."))
        parser.add_argument(
            "--viz",
            action="store_true",
            help=_("Back-track so that fusions are observed one at a time."),
        )
        parser.add_argument("--store-every", type=int, default=None)
        parser.add_argument(
            "--iterates",
            action="store_true",
            help=_("Include the stored iterates in the path JSON."),
        )
        parser.add_argument(
            "--scale",
            choices=("auto", "linear", "log"),
            default="auto",
            help=_("Height scale of the dendrogram."),
        )
        parser.add_argument(
            "--debug",
            action="store_true",
            help=_("Print one CSV line per step to stdout."),
        )

    def run(self, manifest, out_dir, **options):
        data = self.load_data(manifest, options)
        graph = self.build_graph(manifest, data, options)
        config = PathConfig(
            epsilon=options["eps"],
            t=options["t"],
            norm=options["norm"],
            store_every=options["store_every"],
        )
        trace = carp_viz_path if options["viz"] else carp_path
        with manifest.timer("path"):
            path = trace(data, graph, config=config)
        with manifest.timer("dendrogram"):
            scale = None if options["scale"] == "auto" else options["scale"]
            tree = path.to_dendrogram(scale=scale)

        with manifest.timer("write"):
            path.write_json(self.output(manifest, out_dir, options, "path.json"), iterates=options["iterates"])
            path.write_events(self.output(manifest, out_dir, options, "events.csv"))
            write_merge_table(tree, self.output(manifest, out_dir, options, "merges.csv"))
            write_newick(tree, self.output(manifest, out_dir, options, "tree.nwk"))

        manifest.metrics.update(
            {
                "kind": path.kind,
                "steps": path.steps,
                "events": len(path.events),
                "epsilon": path.epsilon,
                "t": path.t,
                "final_gamma": path.gammas[-1],
                "scale": tree.scale,
                "recovery": dendrogram_recovery(path, path.n),
                "edges": len(graph),
                "phi": graph.phi,
            }
        )
        if options["debug"]:
            print_debug_info(path, file=self.stdout)
