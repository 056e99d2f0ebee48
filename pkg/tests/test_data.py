import numpy as np
import pytest

from hrhmm.data import (
    POSITIONS, DataError, IngestConfig, SchemaError, build_dataset, dumps_seasons, elite_hitter_filter,
    load_holdout, load_seasons, split_by_age,
)

HEADER = "player_id,year,hr,ab,age,park,position\n"


def test_load_filters_pitchers_window_and_zero_ab(write_csv):
    p = write_csv("s.csv", HEADER + (
        "a,1990,10,300,25,NYA,1B\n"
        "a,1991,0,0,26,NYA,1B\n"          # no at-bats
        "b,1990,1,20,30,BOS,P\n"          # pitcher
        "c,1989,5,100,24,BOS,SS\n"        # before window
        "c,1990,6,120,25,BOS,ss\n"
    ))
    d = load_seasons(p, IngestConfig(year_min=1990, year_max=2005))
    assert [(s.player_id, s.year) for s in d.seasons] == [("a", 1990), ("c", 1990)]
    assert d.parks == ("BOS", "NYA")
    assert d.seasons[1].position == POSITIONS.index("SS")


def test_comment_lines_are_skipped_and_line_numbers_kept(write_csv):
    p = write_csv("s.csv", "# produced upstream\n" + HEADER + "a,1990,x,300,25,NYA,1B\n")
    with pytest.raises(DataError, match="line 3"):
        load_seasons(p)


def test_hr_above_ab_names_the_row(write_csv):
    p = write_csv("s.csv", HEADER + "a,1990,10,300,25,NYA,1B\nzed,1991,301,300,26,NYA,1B\n")
    with pytest.raises(DataError, match="line 3.*zed"):
        load_seasons(p)


def test_missing_column_is_schema_error(write_csv):
    p = write_csv("s.csv", "player_id,year,hr,ab,age,position\na,1990,1,2,25,1B\n")
    with pytest.raises(SchemaError, match="park"):
        load_seasons(p)


def test_duplicate_player_year_rejected():
    with pytest.raises(DataError, match="duplicate"):
        build_dataset([("a", 1990, 1, 10, 25, "X", 0), ("a", 1990, 2, 10, 25, "X", 0)])


def test_out_of_range_ages_dropped(write_csv):
    p = write_csv("s.csv", HEADER + "a,1990,1,10,19,X,1B\na,1991,1,10,20,X,1B\na,1992,1,10,50,X,1B\n")
    d = load_seasons(p)
    assert [s.age for s in d.seasons] == [20]


def test_seasons_sorted_and_offsets(write_csv):
    p = write_csv("s.csv", HEADER + "b,1991,1,10,25,X,1B\na,1992,1,10,25,X,1B\nb,1990,1,10,24,Y,C\n")
    d = load_seasons(p)
    assert d.player_ids == ("a", "b")
    assert d.offsets.tolist() == [0, 1, 3]
    assert [s.year for s in d.player_seasons("b")] == [1990, 1991]
    assert d.year_range == (1990, 1992)


def test_roundtrip_through_text(tmp_path, small_data):
    d, _ = small_data
    p = tmp_path / "d.csv"
    p.write_text(dumps_seasons(d))
    again = load_seasons(p)
    assert again.seasons == d.seasons
    assert again.fingerprint() == d.fingerprint()


def test_elite_hitter_filter_boundary_inclusive():
    d = build_dataset([
        ("keep", 1990, 10, 400, 25, "X", 0),     # exactly 1/40 with 400 ab
        ("keep", 1991, 0, 50, 26, "X", 0),
        ("low_rate", 1990, 9, 400, 25, "X", 0),
        ("few_ab", 1990, 20, 299, 25, "X", 0),
    ])
    f = elite_hitter_filter(d)
    assert f.player_ids == ("keep",)
    assert f.n_seasons == 2


def test_split_by_age_is_partition():
    rows = [{"age": a} for a in (21, 26, 27, 35)]
    young, old = split_by_age(rows, 26)
    assert [r["age"] for r in young] == [21, 26]
    assert [r["age"] for r in old] == [27, 35]


def test_holdout_external_columns_and_missing_covariates(write_csv):
    p = write_csv("h.csv", "player_id,year,hr,ab,age,park,position,marcel\n"
                  "a,2006,10,300,25,NYA,1B,0.03\n"
                  "b,2006,3,100,,NYA,1B,NA\n"
                  "c,2006,3,100,30,BOS,DH,\n")
    skipped = []
    rows = load_holdout(p, external=["marcel"], skipped=skipped)
    assert [t.player_id for t in rows] == ["a", "c"]
    assert rows[0].external["marcel"] == 0.03
    assert np.isnan(rows[1].external["marcel"])
    assert skipped[0][0] == "b" and "age" in skipped[0][1]


def test_subset_rebuilds_parks(small_data):
    d, _ = small_data
    pid = d.player_ids[0]
    sub = d.subset([pid])
    assert sub.n_players == 1
    assert set(sub.parks) == {d.parks[s.park] for s in d.player_seasons(pid)}
