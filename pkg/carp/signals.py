from django.dispatch import Signal


# Sent for every accepted fusion or fission along a path, with the arguments
# ``event`` (a ``FusionEvent``) and ``graph`` (the ``WeightGraph`` it belongs to).
# The sender is the path class.
fusion_observed = Signal()

# Sent once a path reaches full fusion, with the argument ``path``.
path_finished = Signal()
