# Test collection wiring for running the Django test suite under pytest.
# Mirrors tests/runtests.sh and tests/manage.py: the test app ("myapp") and
# the "settings" module live directly in this directory.
import os
import sys


TESTS_DIR = os.path.dirname(os.path.abspath(__file__))
if TESTS_DIR not in sys.path:
    sys.path.insert(0, TESTS_DIR)

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "settings")

import django  # noqa: E402


django.setup()
