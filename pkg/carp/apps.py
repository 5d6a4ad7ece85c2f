from django.apps import AppConfig
from django.utils.translation import gettext_lazy as _


class CarpConfig(AppConfig):
    name = "carp"
    verbose_name = _("convex clustering paths")
