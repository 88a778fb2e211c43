import sys

from degstein.cli import main

sys.exit(main())
