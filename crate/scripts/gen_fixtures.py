#!/usr/bin/env python3
"""Regenerates the synthetic fixture corpus and the reference channel list.

Outputs (relative to the repository root):
  fixtures/corpus.jsonl        500 messages over 12 channels
  fixtures/planted_hits.txt    keys ("channel/id") of the 40 planted topic hits
  config/channels.toml         170-channel list; the 12 corpus channels first

The planted list is written from the generator's own bookkeeping, not by
running any regex, so tests can use it as an independent oracle.
"""

import json
import random
from datetime import datetime, timedelta, timezone
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
SEED = 20250310

UTC = timezone.utc
CORPUS_START = datetime(2025, 3, 3, 0, 0, 0, tzinfo=UTC)
WINDOW_START = datetime(2025, 3, 9, 6, 0, 0, tzinfo=UTC)
WINDOW_END = datetime(2025, 3, 10, 6, 0, 0, tzinfo=UTC)
FETCHED_AT = WINDOW_END

# key, display name, public handle (None = no public link), language
CHANNELS = [
    ("nordic_wire", "Nordic Wire", "demo_nordic_wire", "en"),
    ("baltic_brief", "Baltic Brief", "demo_baltic_brief", "en"),
    ("world_desk", "World Desk", None, "en"),
    ("east_monitor", "East Monitor", "demo_east_monitor", "en"),
    ("sever_novosti", "Север Новости", "demo_sever_novosti", "ru"),
    ("moskva_segodnya", "Москва сегодня", "demo_msk_segodnya", "ru"),
    ("politika_dnya", "Политика дня", None, "ru"),
    ("granitsa_info", "Граница инфо", "demo_granitsa_info", "ru"),
    ("kyiv_pulse", "Київський пульс", "demo_kyiv_pulse", "uk"),
    ("novyny_live", "Новини Live", "demo_novyny_live", "uk"),
    ("front_zvedennia", "Фронт: зведення", "demo_front_zvedennia", "uk"),
    ("mixed_digest", "Mixed Digest", "demo_mixed_digest", "en"),
]

HITS = {
    "en": [
        "Finland's government announced new border measures at {place}.",
        "Finnish officials met their counterparts in {city} to discuss {topic}.",
        "FINLAND: parliament debates {topic} after a late-night session.",
        "Analysts warn of renewed Finlandization pressure on {country}.",
        "The finnish coast guard reported {event} near {place}.",
    ],
    "ru": [
        "Финляндия закрыла пункты пропуска на участке {place_ru}.",
        "ФИНЛЯНДИЯ ввела новые ограничения для {who_ru}.",
        "Министр обороны Финляндии заявил о {event_ru}.",
        "Финские пограничники сообщили о {event_ru}.",
        "В финской прессе обсуждают {topic_ru}.",
    ],
    "uk": [
        "Фінляндія посилює контроль на кордоні біля {place_uk}.",
        "Фінський уряд оголосив {topic_uk}.",
        "ФІНСЬКИЙ парламент схвалив {topic_uk}.",
        "Міністр закордонних справ Фінляндії відвідав {city_uk}.",
        "фінський бізнес обговорює {topic_uk}.",
    ],
}

# Near misses on purpose: finance/Finn/фінанси share prefixes with the
# topic stems but are not hits.
MISSES = {
    "en": [
        "Sweden raised interest rates by {n} basis points.",
        "Norway's sovereign fund reported a quarterly return of {n} percent.",
        "Finance ministers met in {city} to discuss {topic}.",
        "Fintech startups in {city} raised {n} million this quarter.",
        "Estonia opens a new rail link to {city}.",
        "Talks on {topic} continue in Helsinki next week.",
        "A Huckleberry Finn stage adaptation premieres in {city}.",
        "Weather: heavy snow expected across {place}.",
    ],
    "ru": [
        "Швеция повысила ключевую ставку на {n} базисных пунктов.",
        "Министерство финансов опубликовало данные о {topic_ru}.",
        "Эстония открыла новое железнодорожное сообщение с {city_ru}.",
        "Норвегия увеличила закупки {who_ru}.",
        "Погода: в регионе {place_ru} ожидается сильный снегопад.",
    ],
    "uk": [
        "Швеція підвищила облікову ставку на {n} базисних пунктів.",
        "Міністерство фінансів повідомило про {topic_uk}.",
        "Естонія відкрила нове залізничне сполучення з {city_uk}.",
        "Норвегія збільшила постачання для {who_uk}.",
        "Погода: у регіоні {place_uk} очікується сильний снігопад.",
    ],
}

FILL = {
    "place": ["Vaalimaa", "Nuijamaa", "Salla", "the eastern border", "the Kotka ports"],
    "city": ["Helsinki", "Tallinn", "Stockholm", "Brussels", "Oslo"],
    "topic": ["energy security", "border closures", "defence spending", "Arctic shipping", "sanctions"],
    "country": ["the Baltic states", "Moldova", "Georgia", "Armenia"],
    "event": ["an unidentified vessel", "a cable incident", "a surge in crossings", "GPS interference"],
    "place_ru": ["Выборг", "Светогорск", "Сала", "Карелия"],
    "who_ru": ["российских туристов", "грузовиков", "студентов", "энергетических компаний"],
    "event_ru": ["учениях НАТО", "новом заборе на границе", "нарушении воздушного пространства", "усилении патрулей"],
    "topic_ru": ["энергетическую безопасность", "закрытие границы", "военные расходы", "санкции"],
    "city_ru": ["Таллином", "Ригой", "Хельсинки", "Стокгольмом"],
    "place_uk": ["Карелії", "Лапландії", "Салли", "Вааліма"],
    "topic_uk": ["новий пакет допомоги", "закриття кордону", "збільшення оборонних витрат", "енергетичну угоду"],
    "city_uk": ["Київ", "Львів", "Одесу", "Харків"],
    "who_uk": ["України", "енергетиків", "біженців", "лікарень"],
}


def fill(rng, template):
    out = template
    for key, options in FILL.items():
        token = "{" + key + "}"
        while token in out:
            out = out.replace(token, rng.choice(options), 1)
    while "{n}" in out:
        out = out.replace("{n}", str(rng.randint(2, 90)), 1)
    return out


def rand_time(rng, lo, hi):
    span = int((hi - lo).total_seconds())
    return lo + timedelta(seconds=rng.randrange(span))


def iso(t):
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


def main():
    rng = random.Random(SEED)
    rows = []  # (posted_at, channel_idx, text, is_hit)

    # 40 hits: 6 inside the demo window, one exactly at its (exclusive) end,
    # one exactly at its (inclusive) start counted among the 6.
    hit_times = [WINDOW_START] + [rand_time(rng, WINDOW_START, WINDOW_END) for _ in range(5)]
    hit_times += [WINDOW_END]
    hit_times += [rand_time(rng, CORPUS_START, WINDOW_START) for _ in range(33)]
    # Spread hits over all three languages, forcing the case variants in.
    forced = {
        0: ("ru", "ФИНЛЯНДИЯ ввела новые ограничения для грузовиков."),
        1: ("uk", "Фінський уряд оголосив новий пакет допомоги."),
        2: ("en", "Finland's government announced new border measures at Salla."),
        3: ("uk", "ФІНСЬКИЙ парламент схвалив енергетичну угоду."),
        7: ("ru", "Финляндия закрыла пункты пропуска на участке Выборг."),
        8: ("en", "Analysts warn of renewed Finlandization pressure on Moldova."),
        9: ("uk", "фінський бізнес обговорює закриття кордону."),
    }
    by_lang = {lang: [i for i, c in enumerate(CHANNELS) if c[3] == lang] for lang in ("en", "ru", "uk")}
    for k, t in enumerate(hit_times):
        if k in forced:
            lang, text = forced[k]
        else:
            lang = ("en", "ru", "uk")[k % 3]
            text = fill(rng, rng.choice(HITS[lang]))
        ch = rng.choice(by_lang[lang])
        if k == 4:
            ch = 2  # world_desk: no public handle
        if k == 5:
            ch = 6  # politika_dnya: no public handle
            text = "Министр обороны Финляндии заявил о новом заборе на границе."
        rows.append((t, ch, text, True))

    # 460 non-hits, a few of them empty (media-only posts).
    for k in range(460):
        t = rand_time(rng, CORPUS_START, WINDOW_END)
        ch = rng.randrange(len(CHANNELS))
        lang = CHANNELS[ch][3]
        text = "" if k % 97 == 0 else fill(rng, rng.choice(MISSES[lang]))
        rows.append((t, ch, text, False))

    rows.sort(key=lambda r: (r[0], CHANNELS[r[1]][0]))
    next_id = {c[0]: 1000 + 17 * i for i, c in enumerate(CHANNELS)}
    corpus = []
    planted = []
    for t, ch, text, hit in rows:
        key = CHANNELS[ch][0]
        mid = next_id[key]
        next_id[key] += rng.randint(1, 4)
        views = rng.randint(150, 60000)
        forwards = 0 if rng.random() < 0.2 else rng.randint(1, max(1, views // 40))
        rec = {
            "channel_key": key,
            "source_message_id": mid,
            "posted_at": iso(t),
            "text": text,
            "views": views,
            "forwards": forwards,
            "fetched_at": iso(FETCHED_AT),
        }
        corpus.append(rec)
        if hit:
            planted.append(f"{key}/{mid}")

    assert len(corpus) == 500 and len(planted) == 40
    (ROOT / "fixtures").mkdir(exist_ok=True)
    with open(ROOT / "fixtures/corpus.jsonl", "w", encoding="utf-8") as f:
        for rec in corpus:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
    with open(ROOT / "fixtures/planted_hits.txt", "w", encoding="utf-8") as f:
        f.write("# channel_key/source_message_id of every planted topic hit, corpus order\n")
        for p in planted:
            f.write(p + "\n")

    write_channels(rng)


def write_channels(rng):
    extra_en = ["Daily Ledger", "Border Watch", "Arctic Report", "Harbour Notes", "Energy Desk", "Defence Digest"]
    extra_ru = ["Вести", "Обзор", "Сводка", "Регион", "Новости", "Хроника"]
    extra_uk = ["Вісті", "Огляд", "Зведення", "Регіон", "Новини", "Хроніка"]
    lines = [
        "# Monitored channels. One [[channel]] table per channel:",
        "#   channel_key   stable identifier used in the store (required, unique)",
        "#   display_name  name shown in prompts and reports (required)",
        "#   public_handle public username; enables links to posts (optional)",
        "",
    ]

    def entry(key, name, handle):
        lines.append("[[channel]]")
        lines.append(f"channel_key = {json.dumps(key, ensure_ascii=False)}")
        lines.append(f"display_name = {json.dumps(name, ensure_ascii=False)}")
        if handle:
            lines.append(f"public_handle = {json.dumps(handle)}")
        lines.append("")

    for key, name, handle, _ in CHANNELS:
        entry(key, name, handle)
    for i in range(170 - len(CHANNELS)):
        pool, lang = [(extra_en, "en"), (extra_ru, "ru"), (extra_uk, "uk")][i % 3]
        name = f"{pool[i % len(pool)]} {i + 1}"
        key = f"{lang}_channel_{i + 1:03d}"
        handle = None if i % 11 == 0 else f"demo_{lang}_{i + 1:03d}"
        entry(key, name, handle)
    (ROOT / "config").mkdir(exist_ok=True)
    with open(ROOT / "config/channels.toml", "w", encoding="utf-8") as f:
        f.write("\n".join(lines))


if __name__ == "__main__":
    main()
