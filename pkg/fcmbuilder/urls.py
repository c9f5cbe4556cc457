from django.contrib import admin
from django.urls import path
from kernel import views

urlpatterns = [
    path('admin/', admin.site.urls),
    path('', views.index, name='index'),
    path('api/pmc/', views.classify_points, name='classify_points'),
    path('api/volume/', views.scene_volume, name='scene_volume'),
]
