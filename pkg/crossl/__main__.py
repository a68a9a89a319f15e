"""python -m crossl"""

import sys

from crossl.cli import main

sys.exit(main())
