import sys

from docnade.cli import main

sys.exit(main())
