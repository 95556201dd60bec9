from django.apps import AppConfig


class SyntheticWorldConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "apps.world"
    verbose_name = "Synthetic World"
