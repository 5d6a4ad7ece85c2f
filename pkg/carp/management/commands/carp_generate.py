from django.utils.translation import gettext as _

from carp.dataio import (
    gen_checkerboard,
    gen_gaussian_mixture,
    gen_half_moons,
    gen_two_circles,
    save_csv,
    save_labels,
)
from carp.management.base import CarpCommand


class Command(CarpCommand):
    help = _("Writes a seeded synthetic data set and its true labels.")

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("kind", choices=("gmm", "moons", "circles", "checkerboard"))
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--k", type=int, default=3, help=_("Mixture components."))
        parser.add_argument("--n-per", type=int, default=20, help=_("Points per group."))
        parser.add_argument("--p", type=int, default=2, help=_("Dimensions."))
        parser.add_argument("--sep", type=float, default=10.0)
        parser.add_argument("--noise", type=float, default=0.1)
        parser.add_argument("--row-k", type=int, default=4)
        parser.add_argument("--col-k", type=int, default=2)
        parser.add_argument("--n-per-row", type=int, default=5)
        parser.add_argument("--n-per-col", type=int, default=5)

    def run(self, manifest, out_dir, **options):
        kind = options["kind"]
        seed = manifest.seed = options["seed"]
        col_truth = None
        with manifest.timer("generate"):
            if kind == "gmm":
                data, truth = gen_gaussian_mixture(
                    options["k"], options["n_per"], options["p"], options["sep"], seed
                )
            elif kind == "moons":
                data, truth = gen_half_moons(options["n_per"], options["p"], options["noise"], seed)
            elif kind == "circles":
                data, truth = gen_two_circles(options["n_per"], options["p"], options["noise"], seed)
            else:
                data, truth, col_truth = gen_checkerboard(
                    options["row_k"],
                    options["col_k"],
                    options["n_per_row"],
                    options["n_per_col"],
                    options["sep"],
                    options["noise"],
                    seed,
                )

        save_csv(data, self.output(manifest, out_dir, options, "data.csv"), rownames=False)
        save_labels(truth, self.output(manifest, out_dir, options, "labels.csv"), data.row_labels)
        if col_truth is not None:
            save_labels(
                col_truth, self.output(manifest, out_dir, options, "col_labels.csv"), data.col_labels
            )
        manifest.metrics.update({"n": data.n, "p": data.p, "k": truth.k})
