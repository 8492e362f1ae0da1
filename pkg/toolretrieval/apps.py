from django.apps import AppConfig


class ToolretrievalConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'toolretrieval'
    verbose_name = 'Tool retrieval engine'
