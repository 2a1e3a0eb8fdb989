from django.apps import AppConfig


class CollapseConfig(AppConfig):
    name = "collapse"
    verbose_name = "Neural collapse lab"
