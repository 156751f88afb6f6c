from textcnn_transfer.report import ReportTable, render_csv, render_text, simple_table


def _table():
    return ReportTable("Accuracy", ["r1", "r2", "r3"], ["A", "B"],
                       [[80.0, (1.0, 2.0)], [81.004, (3.0, 1.0)], [None, (3.0, 2.0)]])


class TestBold:
    def test_column_max_per_component(self):
        t = _table()
        assert t.column_max(0) == [81.0]
        assert t.column_max(1) == [3.0, 2.0]

    def test_bold_flags(self):
        t = _table()
        assert t.bold(1, 0) == [True]
        assert t.bold(0, 0) == [False]
        assert t.bold(2, 0) == []
        assert t.bold(2, 1) == [True, True]

    def test_ties_listed(self):
        assert _table().ties() == ["B"]


class TestRender:
    def test_text(self):
        text = render_text(_table())
        lines = text.splitlines()
        assert lines[0] == "Accuracy"
        assert "**81.00**" in text and "---" in text
        assert "**3.00**, 1.00" in text
        assert lines[-1].endswith("B")

    def test_csv(self):
        assert render_csv(_table()).splitlines() == [
            "Setting,A,B", "r1,80.00,\"1.00, 2.00\"", "r2,81.00,\"3.00, 1.00\"", "r3,---,\"3.00, 2.00\""]

    def test_columns_aligned(self):
        lines = render_text(_table()).splitlines()[1:5]
        assert len({line.index("|") for line in lines if "|" in line}) == 1

    def test_simple_table(self):
        t = simple_table("Stats", ["Dataset", "N", "L"], [["mr", 10, 2.5], ["sst", 3, None]])
        assert render_csv(t).splitlines() == ["Dataset,N,L", "mr,10,2.5", "sst,3,-"]
