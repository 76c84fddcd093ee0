import sys

from arwlab.cli import main

sys.exit(main())
