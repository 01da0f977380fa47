"""Seeded synthetic corpora shaped like the upstream soccer and retail data.

The fixtures stand in for the Kaggle/UCI inputs, which are not redistributed.
Output is CSV text accepted by the builders.
"""

from __future__ import annotations

import json
import random

from castle.datasets.catalogs import SOCCER_TABLE, bundled_catalog
from castle.datasets.tabular import write_csv

# (code, name, stadium, seats, transfer record, coach, competition code, type, country, href slug)
CLUBS = (
    ("fc-barcelona", "FC Barcelona", "Spotify Camp Nou", "99354", "+€38.50m", "Ronald Koeman",
     "ES1", "domestic_league", "Spain", "laliga"),
    ("psg", "Paris Saint-Germain", "Parc des Princes", "47929", "-€82.20m", "Mauricio Pochettino",
     "FR1", "domestic_league", "France", "ligue-1"),
    ("ac-milan", "AC Milan", "San Siro", "75817", "-€15.00m", "Stefano Pioli",
     "IT1", "domestic_league", "Italy", "serie-a"),
    ("ajax", "Ajax Amsterdam", "Johan Cruijff ArenA", "55865", "+€42.75m", "Erik ten Hag",
     "NL1", "domestic_league", "Netherlands", "eredivisie"),
    ("benfica", "SL Benfica", "Estádio da Luz", "64642", "+€71.10m", "Jorge Jesus",
     "PO1", "domestic_league", "Portugal", "liga-portugal"),
    ("celtic", "Celtic FC", "Celtic Park", "60411", "+€3.40m", "Ange Postecoglou",
     "SC1", "domestic_league", "Scotland", "scottish-premiership"),
    ("dortmund", "Borussia Dortmund", "Signal Iduna Park", "81365", "+€55.90m", "Marco Rose",
     "L1", "domestic_league", "Germany", "bundesliga"),
    ("everton", "Everton FC", "Goodison Park", "39414", "-€27.30m", "Rafael Benítez",
     "GB1", "domestic_league", "England", "premier-league"),
)

_FIRST = ("Adrien", "Bruno", "Carlos", "Dani", "Emil", "Fabio", "Goran", "Hugo", "Ivan", "Jonas",
          "Kevin", "Luca", "Mateo", "Nico", "Oscar", "Pablo", "Rafa", "Sami", "Tomas", "Yannick")
_LAST = ("Almeida", "Berg", "Costa", "Dias", "Eriksen", "Ferreira", "Gomez", "Hansen", "Ibarra",
         "Jensen", "Kovac", "Lindqvist", "Moreau", "Novak", "Olsen", "Petrov", "Quinn", "Rossi",
         "Silva", "Torres", "Urban", "Vidal", "Weber", "Zielinski")
_COUNTRIES = ("Spain", "France", "Italy", "Netherlands", "Portugal", "Scotland", "Germany", "England",
              "Brazil", "Argentina", "Croatia", "Denmark", "Poland", "Senegal", "Japan")
_POSITIONS = ("Goalkeeper", "Centre-Back", "Left-Back", "Right-Back", "Defensive Midfield",
              "Central Midfield", "Attacking Midfield", "Left Winger", "Right Winger", "Centre-Forward")
_FEET = ("right", "left", "both")


def _club_fields(club) -> dict:
    code, name, stadium, seats, record, coach, comp, ctype, country, slug = club
    return {"club_code": code, "club_name": name, "stadium_name": stadium, "stadium_seats": seats,
            "net_transfer_record": record, "coach_name": coach, "competition_code": comp,
            "competition_type": ctype, "competition_country": country,
            "competition_seasoned_href": f"https://example.org/{slug}/startseite/wettbewerb/{comp}"}


def _player(rng: random.Random, code: str, first: str, last: str, country: str | None = None) -> dict:
    year = rng.randint(1986, 2003)
    return {
        "player_code": code, "first_name": first, "last_name": last, "full_name": f"{first} {last}",
        "date_of_birth": f"{year}-{rng.randint(1, 12):02d}-{rng.randint(1, 28):02d}",
        "age": str(2021 - year),
        "height": f"{rng.randint(165, 198) / 100:.2f}",
        "citizenship": country or rng.choice(_COUNTRIES),
        "position": rng.choice(_POSITIONS), "foot": rng.choice(_FEET),
        "contract_expires": f"{rng.randint(2022, 2026)}-06-30",
        "social_media": json.dumps({"instagram": f"https://example.org/ig/{code}"}),
        "birthplace_city": rng.choice(("Porto", "Lyon", "Turin", "Zagreb", "Rosario", "Malmo", "Dakar")),
        "birthplace_country": country or rng.choice(_COUNTRIES),
    }


def synthetic_soccer(seed: int = 0, players: int = 150, movers: int = 50, retirements: int = 3,
                     clubs=CLUBS) -> tuple:
    """(year A csv, year B csv). Lionel Messi moves fc-barcelona -> psg.

    Every club keeps at least one non-moving player so destination club
    attributes are always readable from the year-A table. Club attributes
    are the same in both years.
    """
    if movers + retirements >= players - len(clubs):
        raise ValueError("too many movers/retirements for the squad sizes")
    rng = random.Random(seed)
    catalog = bundled_catalog("soccer")
    columns = [c for c in catalog.table(SOCCER_TABLE).column_names if c != "player_id"]
    club_by_code = {c[0]: _club_fields(c) for c in clubs}
    codes = list(club_by_code)

    people = [(_player(rng, "lionel-messi", "Lionel", "Messi", "Argentina"), "fc-barcelona")]
    used = {"lionel-messi"}
    # one anchor per club so no squad empties out
    for i in range(players - 1):
        while True:
            first, last = rng.choice(_FIRST), rng.choice(_LAST)
            code = f"{first}-{last}".lower() + f"-{rng.randint(10, 99)}"
            if code not in used:
                used.add(code)
                break
        club = codes[i] if i < len(codes) else rng.choice(codes)
        people.append((_player(rng, code, first, last), club))
    anchors = {p["player_code"] for p, _ in people[1:len(codes) + 1]}

    candidates = [i for i in range(1, len(people)) if people[i][0]["player_code"] not in anchors]
    rng.shuffle(candidates)
    moving = [0] + candidates[:movers - 1]
    retiring = set(candidates[movers - 1:movers - 1 + retirements])
    destination = {0: "psg"}
    for i in moving[1:]:
        destination[i] = rng.choice([c for c in codes if c != people[i][1]])

    year_a, year_b = [], []
    for i, (p, club) in enumerate(people):
        row_a = {**p, **club_by_code[club]}
        year_a.append(row_a)
        if i in retiring:
            continue
        row_b = {**p, **club_by_code[destination.get(i, club)]}
        row_b["age"] = str(int(p["age"]) + 1)
        year_b.append(row_b)
    for row in year_a + year_b:
        for col in catalog.derived_columns(SOCCER_TABLE):
            row[col] = None
    year_b.sort(key=lambda r: r["player_code"])
    return write_csv(columns, year_a), write_csv(columns, year_b)


_ITEMS = (("84978", "HANGING HEART JAR T-LIGHT HOLDER"), ("22423", "REGENCY CAKESTAND 3 TIER"),
          ("85123A", "WHITE HANGING HEART T-LIGHT HOLDER"), ("47566", "PARTY BUNTING"),
          ("20725", "LUNCH BAG RED RETROSPOT"), ("21212", "PACK OF 72 RETROSPOT CAKE CASES"),
          ("22720", "SET OF 3 CAKE TINS PANTRY DESIGN"), ("84879", "ASSORTED COLOUR BIRD ORNAMENT"))
_RETAIL_COUNTRIES = ("United Kingdom", "Germany", "France", "EIRE", "Netherlands", "Spain")
TRANSACTION_COLUMNS = ("Invoice", "StockCode", "Description", "Quantity", "InvoiceDate", "Price",
                       "Customer ID", "Country")


def synthetic_retail(seed: int = 0, sales: int = 200, returns: int = 20) -> str:
    """Transactions CSV in the UCI layout; includes a 2011-11-15 return of 84978 in the UK."""
    rng = random.Random(seed)
    rows = [{"Invoice": "536365", "StockCode": "84978", "Description": _ITEMS[0][1], "Quantity": "3",
             "InvoiceDate": "2011-11-02 10:15:00", "Price": "1.25", "Customer ID": "17850",
             "Country": "United Kingdom"}]
    for n in range(sales - 1):
        stock, desc = rng.choice(_ITEMS)
        month = rng.choice([(2010, m) for m in (10, 11, 12)] + [(2011, m) for m in range(1, 13)])
        rows.append({"Invoice": str(536366 + n), "StockCode": stock, "Description": desc,
                     "Quantity": str(rng.randint(1, 24)),
                     "InvoiceDate": f"{month[0]}-{month[1]:02d}-{rng.randint(1, 28):02d} "
                                    f"{rng.randint(8, 18):02d}:{rng.choice((0, 15, 30, 45)):02d}:00",
                     "Price": f"{rng.randint(29, 1295) / 100:.2f}",
                     "Customer ID": str(rng.randint(12346, 18287)),
                     "Country": rng.choice(_RETAIL_COUNTRIES)})
    rows.append({"Invoice": "C581490", "StockCode": "84978", "Description": _ITEMS[0][1], "Quantity": "-1",
                 "InvoiceDate": "2011-11-15 09:57:00", "Price": "1.25", "Customer ID": "17850",
                 "Country": "United Kingdom"})
    sold = [r for r in rows if int(r["Quantity"]) > 0]
    for n in range(returns - 1):
        base = rng.choice(sold)
        rows.append({**base, "Invoice": f"C{581491 + n}", "Quantity": str(-rng.randint(1, int(base["Quantity"]))),
                     "InvoiceDate": f"2011-12-{rng.randint(1, 9):02d} {rng.randint(8, 18):02d}:00:00"})
    # one return for a pair that never sold: excluded as invalid
    rows.append({"Invoice": f"C{581491 + returns}", "StockCode": "DOT", "Description": "DOTCOM POSTAGE",
                 "Quantity": "-1", "InvoiceDate": "2011-12-05 12:00:00", "Price": "18.00",
                 "Customer ID": "", "Country": "United Kingdom"})
    return write_csv(TRANSACTION_COLUMNS, rows)
