#!/usr/bin/env python3
"""Generate fixtures/golden_1k.jsonl, a small mixed English/Chinese web corpus.

The corpus is deterministic for a given --seed. It mixes clean articles with
the kinds of noise each pipeline stage removes: blocked hosts, unreadable
text, exact and near copies, shared navigation headers, spam, link lists,
repetitive filler and short stubs.
"""

import argparse
import json
import random
from pathlib import Path

EN_SUBJECTS = [
    "the city council", "a local farmer", "the research team", "our reporter", "the museum",
    "a retired teacher", "the river authority", "the school board", "a small bakery",
    "the regional library", "the hospital staff", "a group of volunteers", "the railway company",
    "the weather service", "a young engineer", "the football club", "the county court",
    "an independent bookshop", "the harbour master", "the university press",
]
EN_VERBS = [
    "announced", "described", "reviewed", "questioned", "explained", "published", "measured",
    "proposed", "discussed", "recorded", "examined", "planned", "repaired", "defended",
    "organised", "collected", "compared", "restored", "estimated", "supported",
]
EN_OBJECTS = [
    "a new plan for the old market square", "the cost of repairing the northern bridge",
    "the results of a long study on water quality", "the history of the harbour district",
    "a proposal to extend the evening bus service", "the damage caused by last week's storm",
    "the number of visitors during the summer", "a set of letters found in an attic",
    "the budget for next year's public works", "the decline of bees in the valley",
    "a simple way to reduce heating bills", "the rules for parking near the station",
    "the first harvest from the community garden", "the records of the town's oldest church",
    "a shortage of nurses in rural clinics", "the design of the new swimming pool",
    "the traffic survey on the coastal road", "the return of otters to the river",
    "a plan to plant trees along the avenue", "the flooding risk for houses by the canal",
]
EN_TAILS = [
    "at a meeting on Tuesday evening", "after months of careful work", "in a report released this week",
    "despite strong objections from residents", "with help from students at the college",
    "before the winter season begins", "in front of a large crowd", "during a short interview",
    "while the funding is still uncertain", "as part of a wider review", "for the first time in years",
    "with little attention from the press", "in a letter to the local paper", "on behalf of the district",
    "according to people who were there", "in response to many complaints",
]
EN_FILLERS = [
    "It is not yet clear when the work will start.",
    "Several people said they would wait for more details.",
    "The decision will be reviewed again in the spring.",
    "Many residents have asked for a public meeting.",
    "Officials expect the figures to change next month.",
    "The plan has been welcomed by most of the shop owners.",
    "Some of the older members were less convinced.",
    "A full summary is available at the town hall.",
]

ZH_SUBJECTS = [
    "市政府", "一位老师", "研究小组", "当地的农民", "博物馆", "图书馆的工作人员", "这家医院",
    "一群志愿者", "铁路公司", "气象部门", "一名年轻的工程师", "学校", "社区居民", "出版社",
]
ZH_VERBS = ["公布了", "讨论了", "介绍了", "研究了", "记录了", "提出了", "检查了", "整理了", "比较了", "支持了"]
ZH_OBJECTS = [
    "老城区的改造计划", "北边那座桥的维修费用", "河水质量的长期研究结果", "港口地区的历史",
    "延长夜间公交的建议", "上周暴雨造成的损失", "夏天游客的数量", "阁楼里发现的一批旧信",
    "明年公共工程的预算", "山谷里蜜蜂减少的问题", "降低取暖费用的简单办法", "社区菜园的第一批收成",
    "乡村诊所缺少护士的情况", "沿河房屋的防洪风险", "新游泳馆的设计方案", "海边公路的交通调查",
]
ZH_TAILS = [
    "在周二晚上的会议上", "经过几个月的认真工作", "在本周发布的报告中", "尽管有不少居民表示反对",
    "在大学生的帮助下", "在冬天到来之前", "在很多人的关注下", "这是多年来的第一次", "作为一次全面评估的一部分",
]
ZH_FILLERS = [
    "目前还不清楚工作什么时候开始。", "很多人表示他们会等待更多的消息。", "这个决定将在春天再次讨论。",
    "不少居民希望召开一次公开的会议。", "有关部门认为这些数字下个月还会变化。", "大部分店主都欢迎这个计划。",
    "一些年纪大的居民并不这么认为。", "完整的说明可以在市政大厅看到。",
]

NAV_EN = "Home | News | Sport | Weather | Contact | Login"
NAV_ZH = "首页 | 新闻 | 体育 | 天气 | 联系我们 | 登录"
FOOTER_EN = "Copyright Riverside Gazette. All rights reserved."
SHARE_LINES = ["Share | Tweet | Email", "Read more >>", "Advertisement", "Print this page"]
BLOCKED = ["casino-deals.example", "spamfarm.example.net"]


def en_sentence(r):
    s = f"{r.choice(EN_SUBJECTS)} {r.choice(EN_VERBS)} {r.choice(EN_OBJECTS)} {r.choice(EN_TAILS)}."
    return s[0].upper() + s[1:]


def zh_sentence(r):
    return f"{r.choice(ZH_TAILS)}，{r.choice(ZH_SUBJECTS)}{r.choice(ZH_VERBS)}{r.choice(ZH_OBJECTS)}。"


def paragraphs(r, sentence, fillers, n_par, join):
    out = []
    for _ in range(n_par):
        parts = [sentence(r) for _ in range(r.randint(2, 4))]
        if r.random() < 0.5:
            parts.insert(r.randint(0, len(parts)), r.choice(fillers))
        out.append(join.join(parts))
    return out


def article(r, lang):
    if lang == "en":
        title = en_sentence(r).rstrip(".")
        body = paragraphs(r, en_sentence, EN_FILLERS, r.randint(3, 5), " ")
    else:
        title = zh_sentence(r).rstrip("。")
        body = paragraphs(r, zh_sentence, ZH_FILLERS, r.randint(3, 5), "")
    return [title, ""] + [p for par in body for p in (par, "")][:-1]


def near_copy(r, text):
    words = text.split(" ")
    i = r.randrange(len(words) // 2, len(words))
    words[i] = r.choice(["quietly", "formally", "finally", "again"]) + " " + words[i]
    return " ".join(words)


def exact_copy(r, text):
    variants = [text.upper(), text.replace(".", "!"), text.replace(" ", "  "), text + " ..."]
    return r.choice(variants)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=20240611)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "fixtures" / "golden_1k.jsonl"))
    args = ap.parse_args()
    r = random.Random(args.seed)

    docs = []

    def add(text, url, lang=None):
        docs.append({"id": f"g{len(docs):04d}", "url": url, "text": text, "_lang": lang})

    site = lambda lang, i: f"https://{'news' if lang == 'en' else 'xinwen'}{i % 37}.example.org/a/{i}"

    # Clean articles, some with shared navigation headers and footers.
    for i in range(500):
        lang = "en" if i % 10 < 6 else "zh"
        lines = article(r, lang)
        if (lang == "en" and i % 5 != 0) or i % 2 == 0:
            lines = [NAV_EN if lang == "en" else NAV_ZH] + lines
        if lang == "en" and i % 3 == 0:
            lines = lines + ["", FOOTER_EN]
        if lang == "en" and i % 7 == 0:
            lines.insert(r.randint(2, len(lines)), r.choice(SHARE_LINES))
        add("\n".join(lines), site(lang, i), lang)
    base = list(docs)

    # Exact copies after normalization.
    for i in range(70):
        src = base[r.randrange(len(base))]
        add(exact_copy(r, src["text"]), site("en", 1000 + i))
    # Near copies.
    for i in range(60):
        src = base[r.randrange(len(base))]
        if src["_lang"] != "en":
            src = base[0]
        add(near_copy(r, src["text"]), site("en", 2000 + i))
    # Blocked hosts.
    for i in range(40):
        host = BLOCKED[i % 2]
        add("\n".join(article(r, "en")), f"http://www.{host}/offer/{i}")
    # Unreadable text for language ID.
    for i in range(40):
        junk = " ".join("".join(r.choice("qxzkvjw0123456789") for _ in range(r.randint(3, 9))) for _ in range(80))
        add(junk, site("en", 3000 + i))
    # Short stubs.
    for i in range(50):
        add(en_sentence(r) if i % 2 else zh_sentence(r), site("en", 4000 + i))
    # Advertising spam with keywords on many lines.
    for i in range(40):
        lines = article(r, "en")
        promo = ["Click here to buy now and get free shipping on every order today.",
                 "Limited time offer: buy now, pay later, click here for the best price.",
                 "Sign up now, subscribe today and click here to claim your discount."]
        add("\n".join(promo + lines + promo), site("en", 5000 + i))
    # Link lists.
    for i in range(40):
        links = [f"http://portal{j}.example.com/page{j}.html Related link {j} for travel" for j in range(12)]
        add("\n".join(links), site("en", 6000 + i))
    # Repetitive filler text.
    for i in range(40):
        line = en_sentence(r)
        add("\n".join([line] * 30), site("en", 7000 + i))
    # Forum threads and video pages.
    for i in range(30):
        lines = [f"Reply #{j} posted by user{r.randint(1, 99)}: {en_sentence(r)} Quote reply in this thread." for j in range(6)]
        add("\n".join(lines), site("en", 10000 + i))
    for i in range(30):
        lines = [f"Watch the video: {en_sentence(r)} Full video trailer on youtube." for _ in range(5)]
        add("\n".join(lines), site("en", 11000 + i))
    # Bullet-heavy listings.
    for i in range(30):
        items = [f"- {en_sentence(r)}" for _ in range(10)]
        add("\n".join(items), site("en", 8000 + i))
    # Symbol noise.
    for i in range(30):
        words = [en_sentence(r) for _ in range(6)]
        add(" ### ".join(words) + " " + " ".join("#" * 3 for _ in range(40)), site("en", 9000 + i))

    assert len(docs) == 1000, len(docs)
    r.shuffle(docs)
    with open(args.out, "w", encoding="utf-8") as f:
        for i, d in enumerate(docs):
            d.pop("_lang")
            d["id"] = f"g{i:04d}"
            f.write(json.dumps(d, ensure_ascii=False) + "\n")
    print(f"wrote {len(docs)} documents to {args.out}")


if __name__ == "__main__":
    main()
