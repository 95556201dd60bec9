"""config URL Configuration

Solo se expone el admin de Django para inspeccionar las ejecuciones persistidas.
"""

from django.contrib import admin
from django.urls import path

urlpatterns = [
    path("admin/", admin.site.urls),
]
