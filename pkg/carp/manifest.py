"""
The manifest every management command writes next to its outputs.
"""
import hashlib
import json
import os
import platform
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import django
import numpy
import scipy
import sklearn

from carp import __version__


def file_digest(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    options: dict = field(default_factory=dict)
    input_sha256: str = None
    seed: int = None
    timings: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    versions: dict = field(
        default_factory=lambda: {
            "carp": __version__,
            "python": platform.python_version(),
            "django": django.get_version(),
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__,
        }
    )

    @contextmanager
    def timer(self, phase):
        started = time.perf_counter()
        try:
            yield
        finally:
            self.timings[phase] = self.timings.get(phase, 0.0) + time.perf_counter() - started

    def hash_input(self, path):
        self.input_sha256 = file_digest(path)

    def output(self, directory, name):
        """
        Registers and returns the path of an output file.
        """
        self.outputs.append(name)
        return os.path.join(directory, name)

    def write(self, directory, name="manifest.json"):
        path = os.path.join(directory, name)
        with open(path, "w") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True, default=str)
        return path
