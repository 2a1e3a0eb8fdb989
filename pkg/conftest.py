import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "nclab.settings")
django.setup()
