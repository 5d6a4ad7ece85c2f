"""
``python -m carp cluster data.csv`` runs the ``carp_cluster`` management
command without a Django project.
"""
import sys

import django
from django.conf import settings
from django.core.management import execute_from_command_line


COMMANDS = ("cluster", "bicluster", "exact", "sweep", "generate", "compare")


def configure():
    if settings.configured:
        return
    settings.configure(
        INSTALLED_APPS=["carp"],
        USE_I18N=True,
        LOGGING={
            "version": 1,
            "disable_existing_loggers": False,
            "handlers": {"stderr": {"class": "logging.StreamHandler"}},
            "loggers": {"carp": {"handlers": ["stderr"], "level": "INFO"}},
        },
    )
    django.setup()


def main(argv=None):
    argv = list(sys.argv if argv is None else argv)
    if len(argv) > 1 and argv[1] in COMMANDS:
        argv[1] = "carp_" + argv[1]
    configure()
    execute_from_command_line(argv)


if __name__ == "__main__":
    main()
