from django.apps import AppConfig


class OptimAppConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "apps.optim"
    verbose_name = "Optimization"
