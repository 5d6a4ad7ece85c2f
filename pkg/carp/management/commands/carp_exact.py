import csv
import json
import logging

import numpy as np
from django.utils.translation import gettext as _

from carp.dataio import DataMatrix, save_csv
from carp.management.base import CarpCommand
from carp.paths import PathConfig, carp_path
from carp.prox import PenaltySpec
from carp.settings import SCOUT_T
from carp.solvers import SOLVERS, admm_grid_path, default_epsilon, solve_grid
from carp.utils import format_float


logger = logging.getLogger(__name__)


class Command(CarpCommand):
    help = _("Solves convex clustering exactly along a grid of levels.")

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_data_arguments(parser)
        self.add_graph_arguments(parser)
        parser.add_argument("--rho", type=float, default=None)
        parser.add_argument("--solver", choices=sorted(SOLVERS), default="admm")
        parser.add_argument(
            "--grid-points",
            type=int,
            default=100,
            help=_("Geometric grid size between the initial level and full fusion."),
        )
        parser.add_argument(
            "--t",
            type=float,
            default=None,
            help=_("Use the open-ended grid eps * t^k until full fusion instead."),
        )
        parser.add_argument("--eps", type=float, default=None)
        parser.add_argument("--lambda-max", type=float, default=None)
        parser.add_argument("--tol", type=float, default=None)
        parser.add_argument("--max-iter", type=int, default=None)
        parser.add_argument("--norm", default="l2")

    def _levels(self, data, graph, spec, options):
        epsilon = options["eps"] or default_epsilon(data.values, graph, spec)
        top = options["lambda_max"]
        if top is None:
            scout = carp_path(data, graph, spec, PathConfig(epsilon=epsilon, t=SCOUT_T))
            top = scout.gammas[-1] * SCOUT_T
        return np.geomspace(epsilon, max(top, epsilon), options["grid_points"])

    def run(self, manifest, out_dir, **options):
        data = self.load_data(manifest, options)
        graph = self.build_graph(manifest, data, options)
        spec = PenaltySpec.for_graph(graph, options["norm"])
        solver_options = {
            "spec": spec,
            "solver": options["solver"],
            "tol": options["tol"],
            "max_iter": options["max_iter"],
        }
        with manifest.timer("solve"):
            if options["t"] is not None:
                result = admm_grid_path(data, graph, epsilon=options["eps"], t=options["t"], **solver_options)
            else:
                result = solve_grid(data, graph, self._levels(data, graph, spec, options), **solver_options)
        if not result.fully_fused():
            logger.warning("The last grid level %g does not fully fuse the data", result.lambdas[-1])

        with manifest.timer("write"):
            with open(self.output(manifest, out_dir, options, "exact.json"), "w") as f:
                json.dump(result.to_dict(), f, indent=1)
            with open(self.output(manifest, out_dir, options, "grid.csv"), "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(("lambda", "iterations", "converged", "clusters"))
                for row in zip(result.lambdas, result.iterations, result.converged, result.clusters):
                    writer.writerow((format_float(row[0]), row[1], int(row[2]), row[3]))
            final = DataMatrix(result.solutions[-1], data.row_labels, data.col_labels)
            save_csv(final, self.output(manifest, out_dir, options, "final.csv"))

        manifest.metrics.update(
            {
                "solver": result.solver,
                "grid_points": len(result),
                "iterations": int(sum(result.iterations)),
                "unconverged": int(len(result) - sum(result.converged)),
                "final_clusters": result.clusters[-1],
            }
        )
