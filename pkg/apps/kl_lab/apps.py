from django.apps import AppConfig


class KlLabConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "apps.kl_lab"
    verbose_name = "KL Lab"
