import sys

from plmodica.cli import main

sys.exit(main())
