import os
import tempfile
import unittest

from app import main, render_all

CSV = "date,symbol,close\n2024-01-01,ABC,10\n2024-01-02,ABC,11\n2024-01-01,XYZ,5\n"


class AppTest(unittest.TestCase):
    def test_render_all_names(self):
        self.assertEqual(sorted(render_all(CSV, "put", 10)), ["ABC_prices.svg", "XYZ_prices.svg", "payoff.svg"])

    def test_main_writes_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            data = os.path.join(tmp, "prices.csv")
            with open(data, "w") as handle:
                handle.write(CSV)
            out = os.path.join(tmp, "out")
            self.assertEqual(main([data, "--out", out]), 0)
            self.assertEqual(len(os.listdir(out)), 3)


if __name__ == "__main__":
    unittest.main()
