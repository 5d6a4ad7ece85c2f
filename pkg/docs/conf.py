# django-carp documentation build configuration file.
#
# This file is execfile()d with the current directory set to its containing dir.

import os
import sys


# The package lives one directory up.
sys.path.insert(0, os.path.abspath(".."))
from django import setup
from django.conf import settings


#######################################
settings.configure(
    INSTALLED_APPS=("carp",),
    SECRET_KEY="docs",
    USE_I18N=True,
    LANGUAGES=[("en", "English")],
)
setup()

# -- General configuration -----------------------------------------------------

extensions = ["sphinx.ext.autodoc", "sphinx.ext.intersphinx", "sphinx_rtd_theme"]

templates_path = []

source_suffix = ".rst"

master_doc = "index"

project = "django-carp"
copyright = "2024, the django-carp authors"

version = __import__("carp").__version__
release = version

exclude_patterns = []

pygments_style = "sphinx"

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/", None),
}


# -- Options for HTML output ---------------------------------------------------

html_theme = "sphinx_rtd_theme"

html_static_path = []

htmlhelp_basename = "django-carpdoc"


# -- Options for LaTeX output --------------------------------------------------

latex_documents = [
    (
        "index",
        "django-carp.tex",
        "django-carp Documentation",
        "the django-carp authors",
        "manual",
    ),
]


# -- Options for manual page output --------------------------------------------

man_pages = [
    ("index", "django-carp", "django-carp Documentation", ["the django-carp authors"], 1)
]
