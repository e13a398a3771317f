import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'backflash.settings')
django.setup()
