import sys

from girp.cli import main

sys.exit(main())
