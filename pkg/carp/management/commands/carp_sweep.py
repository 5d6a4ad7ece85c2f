import csv
import time
from concurrent.futures import ThreadPoolExecutor

from django.utils.translation import gettext as _

from carp.management.base import CarpCommand, float_list
from carp.metrics import dendrogram_recovery, normalized_hausdorff
from carp.paths import PathConfig, carp_path, carp_viz_path
from carp.utils import format_float


class Command(CarpCommand):
    help = _(
        "Traces paths for several step-sizes and compares each with a fine "
        "reference path."
    )

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_data_arguments(parser)
        self.add_graph_arguments(parser)
        parser.add_argument("--rho", type=float, default=None)
        parser.add_argument(
            "--t-list",
            type=float_list,
            default=[1.1, 1.05, 1.01, 1.005],
            help=_("Comma separated step-sizes."),
        )
        parser.add_argument("--reference-t", type=float, default=1.0005)
        parser.add_argument("--viz", action="store_true")
        parser.add_argument("--eps", type=float, default=None)
        parser.add_argument("--jobs", type=int, default=1)

    def run(self, manifest, out_dir, **options):
        data = self.load_data(manifest, options)
        graph = self.build_graph(manifest, data, options)
        trace = carp_viz_path if options["viz"] else carp_path

        def timed(t):
            started = time.perf_counter()
            path = trace(data, graph, config=PathConfig(epsilon=options["eps"], t=t))
            return path, time.perf_counter() - started

        with manifest.timer("reference"):
            reference, _seconds = timed(options["reference_t"])

        with manifest.timer("sweep"):
            t_list = options["t_list"]
            if options["jobs"] > 1:
                with ThreadPoolExecutor(max_workers=options["jobs"]) as pool:
                    runs = list(pool.map(timed, t_list))
            else:
                runs = [timed(t) for t in t_list]

        with open(self.output(manifest, out_dir, options, "sweep.csv"), "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(("t", "steps", "events", "hausdorff", "recovery", "seconds"))
            for t, (path, seconds) in zip(t_list, runs):
                distance = normalized_hausdorff(path, reference, data, graph).distance
                writer.writerow(
                    (
                        format_float(t),
                        path.steps,
                        len(path.events),
                        format_float(distance),
                        format_float(dendrogram_recovery(path, data.n)),
                        format_float(seconds),
                    )
                )
        manifest.metrics["reference_steps"] = reference.steps
