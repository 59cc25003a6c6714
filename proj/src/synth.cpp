#include "cxnlm/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <string_view>

#include "cxnlm/error.hpp"
#include "cxnlm/random.hpp"
#include "cxnlm/utf8.hpp"

namespace cxnlm::synth {

namespace {

enum Gender { kMasc, kFem, kNeut };
enum Case { kNom, kAcc, kDat };
enum class Det { def, indef, poss, none };

constexpr const char* kGenderFeat[] = {"Masc", "Fem", "Neut"};
constexpr const char* kCaseFeat[] = {"Nom", "Acc", "Dat"};

enum NounKind { kPerson, kAnimal, kThing, kFood, kPlace };

struct Noun {
  std::string sg;
  std::string pl;
  Gender gender;
  NounKind kind;
  double weight = 1.0;
  bool compound = false;

  std::string form(bool plural, Case c) const {
    if (!plural) return sg;
    if (c == kDat && pl.back() != 'n' && pl.back() != 's') return pl + "n";
    return pl;
  }
};

// Person/number slot: 0 ich, 1 du, 2 er/sie/es, 3 wir, 4 ihr, 5 sie.
int slot(int person, bool plural) { return person - 1 + (plural ? 3 : 0); }

struct Verb {
  std::string inf;
  std::array<std::string, 6> forms;
  std::string imp_sg;
  std::string imp_pl;
  bool transitive = false;
  bool imperative = true;
  double weight = 1.0;
};

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

// Regular present tense; `stem2`/`imp` override the vowel-changing forms.
Verb conjugate(const std::string& inf, bool transitive, const std::string& stem23 = "", const std::string& imp = "") {
  Verb v;
  v.inf = inf;
  v.transitive = transitive;
  std::string stem;
  if (ends_with(inf, "ern") || ends_with(inf, "eln")) {
    stem = inf.substr(0, inf.size() - 1);
    const std::string first =
        ends_with(inf, "eln") ? stem.substr(0, stem.size() - 2) + "le" : stem + "e";
    v.forms = {first, stem + "st", stem + "t", inf, stem + "t", inf};
    v.imp_sg = first;
    v.imp_pl = stem + "t";
    return v;
  }
  stem = inf.substr(0, inf.size() - 2);
  const bool t_stem = ends_with(stem, "t") || ends_with(stem, "d") || ends_with(stem, "ffn") || ends_with(stem, "chn");
  const bool s_stem = ends_with(stem, "s") || ends_with(stem, "ß") || ends_with(stem, "z") || ends_with(stem, "x");
  const std::string e = t_stem ? "e" : "";
  v.forms[0] = stem + "e";
  v.forms[1] = stem + e + (s_stem ? "t" : "st");
  v.forms[2] = stem + e + "t";
  v.forms[3] = inf;
  v.forms[4] = stem + e + "t";
  v.forms[5] = inf;
  v.imp_sg = t_stem ? stem + "e" : stem;
  v.imp_pl = v.forms[4];
  if (!stem23.empty()) {
    const bool s2 = ends_with(stem23, "s") || ends_with(stem23, "ß") || ends_with(stem23, "z");
    const bool t2 = ends_with(stem23, "t");
    v.forms[1] = stem23 + (s2 ? "t" : "st");
    v.forms[2] = t2 ? stem23 : stem23 + "t";
    if (t2) v.forms[1] = stem23 + "st";
  }
  if (!imp.empty()) v.imp_sg = imp;
  return v;
}

Verb fixed(const std::string& inf, std::array<std::string, 6> forms, bool transitive, const std::string& imp_sg = "",
           const std::string& imp_pl = "") {
  Verb v;
  v.inf = inf;
  v.forms = std::move(forms);
  v.transitive = transitive;
  v.imp_sg = imp_sg;
  v.imp_pl = imp_pl;
  v.imperative = !imp_sg.empty();
  return v;
}

struct Adj {
  std::string base;
  bool attributive = true;
};

struct Pronoun {
  std::string nom, acc, dat;
  int person;
  bool plural;
  Gender gender;
};

std::string capitalize(std::string s) {
  if (s.empty()) return s;
  auto cps = utf8::decode(s);
  cps[0] = to_upper(cps[0]);
  return utf8::encode(cps);
}

struct Sent {
  std::vector<AnnotatedToken> t;

  int add(const std::string& form, const std::string& lemma, const std::string& upos, const std::string& feats = "") {
    AnnotatedToken tok;
    tok.form = form;
    tok.lemma = lemma;
    tok.upos = upos;
    if (!feats.empty()) {
      std::size_t start = 0;
      while (start <= feats.size()) {
        const std::size_t bar = std::min(feats.find('|', start), feats.size());
        const std::string kv = feats.substr(start, bar - start);
        const std::size_t eq = kv.find('=');
        tok.morph[kv.substr(0, eq)] = kv.substr(eq + 1);
        start = bar + 1;
      }
    }
    tok.head = -2;  // unattached until link()
    t.push_back(std::move(tok));
    return static_cast<int>(t.size()) - 1;
  }

  void link(int dep, int head, const std::string& rel) {
    t[static_cast<std::size_t>(dep)].head = head;
    t[static_cast<std::size_t>(dep)].deprel = rel;
  }

  int punct(const std::string& p, int head) {
    const int i = add(p, p, "PUNCT");
    link(i, head, "punct");
    return i;
  }
};

std::string noun_feats(const Noun& n, bool plural, Case c) {
  return std::string("Case=") + kCaseFeat[c] + "|Gender=" + kGenderFeat[n.gender] +
         "|Number=" + (plural ? "Plur" : "Sing");
}

std::string verb_feats(int s) {
  return std::string("Mood=Ind|Number=") + (s >= 3 ? "Plur" : "Sing") + "|Person=" + std::to_string(s % 3 + 1) +
         "|Tense=Pres|VerbForm=Fin";
}

struct Subject {
  int head = -1;
  int agreement = 2;  // person/number slot
};

}  // namespace

namespace {

class GrammarImpl {
 public:
  Rng rng;
  std::vector<Noun> nouns;
  std::vector<Verb> intransitive;
  std::vector<Verb> transitive;
  std::vector<Verb> thinking;  // take a dass-clause
  std::vector<Adj> adjectives;
  std::vector<Pronoun> pronouns;
  std::vector<std::string> names;
  std::vector<std::string> adverbs;
  std::vector<std::string> places;  // prepositions taking a dative place noun
  Verb sein, werden;
  std::vector<Verb> modals;
  std::vector<double> noun_cdf;

  explicit GrammarImpl(std::uint64_t seed) : rng(seed) { build_lexicon(); }

  // ---- lexicon ------------------------------------------------------------

  void build_lexicon() {
    struct BaseNoun {
      const char* sg;
      const char* pl;
      Gender g;
      NounKind k;
    };
    static const BaseNoun base[] = {
        {"Hund", "Hunde", kMasc, kAnimal},       {"Katze", "Katzen", kFem, kAnimal},
        {"Ball", "Bälle", kMasc, kThing},        {"Kind", "Kinder", kNeut, kPerson},
        {"Baby", "Babys", kNeut, kPerson},       {"Mann", "Männer", kMasc, kPerson},
        {"Frau", "Frauen", kFem, kPerson},       {"Vogel", "Vögel", kMasc, kAnimal},
        {"Apfel", "Äpfel", kMasc, kFood},        {"Buch", "Bücher", kNeut, kThing},
        {"Auto", "Autos", kNeut, kThing},        {"Haus", "Häuser", kNeut, kThing},
        {"Baum", "Bäume", kMasc, kThing},        {"Blume", "Blumen", kFem, kThing},
        {"Fisch", "Fische", kMasc, kAnimal},     {"Pferd", "Pferde", kNeut, kAnimal},
        {"Kuh", "Kühe", kFem, kAnimal},          {"Ente", "Enten", kFem, kAnimal},
        {"Maus", "Mäuse", kFem, kAnimal},        {"Schwein", "Schweine", kNeut, kAnimal},
        {"Schaf", "Schafe", kNeut, kAnimal},     {"Hase", "Hasen", kMasc, kAnimal},
        {"Bär", "Bären", kMasc, kAnimal},        {"Teddy", "Teddys", kMasc, kThing},
        {"Puppe", "Puppen", kFem, kThing},       {"Tisch", "Tische", kMasc, kThing},
        {"Stuhl", "Stühle", kMasc, kThing},      {"Bett", "Betten", kNeut, kThing},
        {"Tasse", "Tassen", kFem, kThing},       {"Löffel", "Löffel", kMasc, kThing},
        {"Teller", "Teller", kMasc, kThing},     {"Schuh", "Schuhe", kMasc, kThing},
        {"Hose", "Hosen", kFem, kThing},         {"Jacke", "Jacken", kFem, kThing},
        {"Mütze", "Mützen", kFem, kThing},       {"Stein", "Steine", kMasc, kThing},
        {"Kissen", "Kissen", kNeut, kThing},     {"Brot", "Brote", kNeut, kFood},
        {"Banane", "Bananen", kFem, kFood},      {"Keks", "Kekse", kMasc, kFood},
        {"Kuchen", "Kuchen", kMasc, kFood},      {"Suppe", "Suppen", kFem, kFood},
        {"Milch", "Milch", kFem, kFood},         {"Saft", "Säfte", kMasc, kFood},
        {"Nudel", "Nudeln", kFem, kFood},        {"Tomate", "Tomaten", kFem, kFood},
        {"Karotte", "Karotten", kFem, kFood},    {"Birne", "Birnen", kFem, kFood},
        {"Garten", "Gärten", kMasc, kPlace},     {"Wald", "Wälder", kMasc, kPlace},
        {"Park", "Parks", kMasc, kPlace},        {"Zimmer", "Zimmer", kNeut, kPlace},
        {"Küche", "Küchen", kFem, kPlace},       {"Straße", "Straßen", kFem, kPlace},
        {"Wiese", "Wiesen", kFem, kPlace},       {"Schule", "Schulen", kFem, kPlace},
        {"Bruder", "Brüder", kMasc, kPerson},    {"Schwester", "Schwestern", kFem, kPerson},
        {"Freund", "Freunde", kMasc, kPerson},   {"Freundin", "Freundinnen", kFem, kPerson},
        {"Lehrer", "Lehrer", kMasc, kPerson},    {"Nachbar", "Nachbarn", kMasc, kPerson},
        {"Zug", "Züge", kMasc, kThing},          {"Boot", "Boote", kNeut, kThing},
        {"Flugzeug", "Flugzeuge", kNeut, kThing}, {"Fahrrad", "Fahrräder", kNeut, kThing},
        {"Eimer", "Eimer", kMasc, kThing},       {"Schaufel", "Schaufeln", kFem, kThing},
        {"Kiste", "Kisten", kFem, kThing},       {"Tür", "Türen", kFem, kThing},
        {"Fenster", "Fenster", kNeut, kThing},   {"Lampe", "Lampen", kFem, kThing},
        {"Uhr", "Uhren", kFem, kThing},          {"Bild", "Bilder", kNeut, kThing},
        {"Stift", "Stifte", kMasc, kThing},      {"Zahn", "Zähne", kMasc, kThing},
        {"Hand", "Hände", kFem, kThing},         {"Nase", "Nasen", kFem, kThing},
        {"Frosch", "Frösche", kMasc, kAnimal},   {"Affe", "Affen", kMasc, kAnimal},
        {"Löwe", "Löwen", kMasc, kAnimal},       {"Elefant", "Elefanten", kMasc, kAnimal},
        {"Tiger", "Tiger", kMasc, kAnimal},      {"Huhn", "Hühner", kNeut, kAnimal},
        {"Käfer", "Käfer", kMasc, kAnimal},      {"Schnecke", "Schnecken", kFem, kAnimal},
        {"Eis", "Eis", kNeut, kFood},            {"Wurst", "Würste", kFem, kFood},
        {"Käse", "Käse", kMasc, kFood},          {"Ei", "Eier", kNeut, kFood},
        {"Sonne", "Sonnen", kFem, kThing},       {"Mond", "Monde", kMasc, kThing},
        {"Stern", "Sterne", kMasc, kThing},      {"Wolke", "Wolken", kFem, kThing},
        {"Bus", "Busse", kMasc, kThing},         {"Turm", "Türme", kMasc, kThing},
        {"Schrank", "Schränke", kMasc, kThing},  {"Decke", "Decken", kFem, kThing},
        {"Socke", "Socken", kFem, kThing},       {"Flasche", "Flaschen", kFem, kThing},
        {"Glas", "Gläser", kNeut, kThing},       {"Messer", "Messer", kNeut, kThing},
        {"Gabel", "Gabeln", kFem, kThing},       {"Schachtel", "Schachteln", kFem, kThing},
        {"Rad", "Räder", kNeut, kThing},         {"Drache", "Drachen", kMasc, kAnimal},
        {"König", "Könige", kMasc, kPerson},     {"Prinzessin", "Prinzessinnen", kFem, kPerson},
        {"Hexe", "Hexen", kFem, kPerson},        {"Ritter", "Ritter", kMasc, kPerson},
        {"Pirat", "Piraten", kMasc, kPerson},    {"Arzt", "Ärzte", kMasc, kPerson},
        {"Bauer", "Bauern", kMasc, kPerson},     {"Koch", "Köche", kMasc, kPerson},
        {"Ziege", "Ziegen", kFem, kAnimal},      {"Igel", "Igel", kMasc, kAnimal},
        {"Eule", "Eulen", kFem, kAnimal},        {"Wurm", "Würmer", kMasc, kAnimal},
    };
    for (std::size_t i = 0; i < std::size(base); ++i) {
      nouns.push_back({base[i].sg, base[i].pl, base[i].g, base[i].k, 1.0 / (1.0 + static_cast<double>(i) * 0.15)});
    }
    // Compounds: modifier + head noun, inheriting the head's gender and kind.
    static const char* modifiers[] = {"Spiel", "Wasser", "Sand",   "Schnee", "Kinder", "Zucker", "Blumen", "Schoko",
                                      "Bade",  "Schlaf", "Feuer",  "Regen",  "Garten", "Winter", "Sommer", "Holz",
                                      "Papier", "Tier",  "Riesen", "Zauber", "Mittag", "Abend",  "Puppen", "Teddy",
                                      "Apfel", "Baum",   "Wald",   "Straßen", "Haus",  "Glitzer", "Lieblings", "Hunde"};
    const std::size_t n_base = nouns.size();
    std::vector<Noun> compounds;
    for (std::size_t m = 0; m < std::size(modifiers); ++m) {
      for (std::size_t h = 0; h < n_base; ++h) {
        const Noun& head = nouns[h];
        if (head.kind == kPerson && std::string_view(modifiers[m]) == "Hunde") continue;
        std::string lower_sg = head.sg, lower_pl = head.pl;
        auto lower = [](std::string s) {
          auto cps = utf8::decode(s);
          cps[0] = to_lower(cps[0]);
          return utf8::encode(cps);
        };
        if (lower(head.sg).rfind(lower(modifiers[m]), 0) == 0) continue;
        compounds.push_back({modifiers[m] + lower(head.sg), modifiers[m] + lower(head.pl), head.gender, head.kind,
                             0.004 * head.weight, true});
      }
    }
    nouns.insert(nouns.end(), compounds.begin(), compounds.end());
    double acc = 0;
    for (const auto& n : nouns) noun_cdf.push_back(acc += n.weight);

    intransitive = {
        conjugate("lachen", false),         conjugate("spielen", false),
        conjugate("weinen", false),         conjugate("tanzen", false),
        conjugate("singen", false),         conjugate("schwimmen", false),
        conjugate("hüpfen", false),         conjugate("rennen", false),
        conjugate("warten", false),         conjugate("klettern", false),
        conjugate("schlafen", false, "schläf", "schlaf"),
        conjugate("laufen", false, "läuf", "lauf"),
        conjugate("fallen", false, "fäll", "fall"),
        conjugate("kommen", false, "", "komm"),
        conjugate("gehen", false, "", "geh"),
        conjugate("stehen", false),         conjugate("sitzen", false),
        conjugate("liegen", false),         conjugate("fliegen", false),
        conjugate("bellen", false),         conjugate("schreien", false),
        conjugate("lächeln", false),        conjugate("träumen", false),
        conjugate("rufen", false),          conjugate("husten", false),
        conjugate("baden", false),          conjugate("bleiben", false),
        conjugate("fahren", false, "fähr", "fahr"),
        conjugate("wackeln", false),        conjugate("zittern", false),
        conjugate("schaukeln", false),      conjugate("pfeifen", false),
        conjugate("niesen", false),         conjugate("rutschen", false),
        conjugate("krabbeln", false),       conjugate("quaken", false),
    };
    for (auto& v : intransitive) {
      if (v.inf == "bellen" || v.inf == "quaken") v.imperative = false;
    }
    transitive = {
        conjugate("sehen", true, "sieh", "sieh"),   conjugate("essen", true, "iss", "iss"),
        conjugate("nehmen", true, "nimm", "nimm"),  conjugate("finden", true),
        conjugate("holen", true),                   conjugate("suchen", true),
        conjugate("kaufen", true),                  conjugate("malen", true),
        conjugate("bauen", true),                   conjugate("tragen", true, "träg", "trag"),
        conjugate("werfen", true, "wirf", "wirf"),  conjugate("fangen", true, "fäng", "fang"),
        conjugate("lesen", true, "lies", "lies"),   conjugate("trinken", true),
        conjugate("waschen", true, "wäsch", "wasch"), conjugate("halten", true, "hält", "halt"),
        conjugate("brauchen", true),                conjugate("kennen", true),
        conjugate("lieben", true),                  conjugate("füttern", true),
        conjugate("streicheln", true),              conjugate("küssen", true),
        conjugate("putzen", true),                  conjugate("schieben", true),
        conjugate("ziehen", true),                  conjugate("öffnen", true),
        conjugate("bringen", true),                 conjugate("machen", true),
        conjugate("packen", true),                  conjugate("backen", true),
        conjugate("pflücken", true),                conjugate("verstecken", true),
        conjugate("besuchen", true),                conjugate("fressen", true, "friss", "friss"),
        conjugate("schneiden", true),               conjugate("zeigen", true),
        conjugate("drücken", true),                 conjugate("umarmen", true),
        fixed("mögen", {"mag", "magst", "mag", "mögen", "mögt", "mögen"}, true),
        fixed("haben", {"habe", "hast", "hat", "haben", "habt", "haben"}, true, "hab", "habt"),
    };
    thinking = {conjugate("glauben", false), conjugate("denken", false), conjugate("hoffen", false),
                fixed("wissen", {"weiß", "weißt", "weiß", "wissen", "wisst", "wissen"}, false),
                conjugate("sagen", false), conjugate("hören", false), conjugate("merken", false)};
    sein = fixed("sein", {"bin", "bist", "ist", "sind", "seid", "sind"}, false);
    werden = fixed("werden", {"werde", "wirst", "wird", "werden", "werdet", "werden"}, false);
    modals = {fixed("können", {"kann", "kannst", "kann", "können", "könnt", "können"}, false),
              fixed("wollen", {"will", "willst", "will", "wollen", "wollt", "wollen"}, false),
              fixed("müssen", {"muss", "musst", "muss", "müssen", "müsst", "müssen"}, false),
              fixed("dürfen", {"darf", "darfst", "darf", "dürfen", "dürft", "dürfen"}, false),
              fixed("sollen", {"soll", "sollst", "soll", "sollen", "sollt", "sollen"}, false)};
    adjectives = {{"groß"},  {"klein"},  {"rot"},    {"blau"},   {"grün"},  {"gelb"},   {"schön"},  {"lieb"},
                  {"müde"},  {"warm"},   {"kalt"},   {"nass"},   {"süß"},   {"lecker"}, {"dick"},   {"alt"},
                  {"neu"},   {"schnell"}, {"laut"},  {"leise"},  {"weich"}, {"hart"},   {"rund"},   {"lustig"},
                  {"traurig"}, {"hungrig"}, {"wild"}, {"brav"},  {"bunt"},  {"sauber"}, {"schmutzig"}, {"toll"},
                  {"frech"}, {"stark"},  {"heiß"},   {"kaputt", false}, {"fertig", false}, {"satt", false},
                  {"glücklich"}, {"lang"}, {"kurz"}, {"schwer"}, {"leicht"}, {"weiß"}, {"schwarz"}, {"rosa", false}};
    pronouns = {{"ich", "mich", "mir", 1, false, kMasc}, {"du", "dich", "dir", 2, false, kMasc},
                {"er", "ihn", "ihm", 3, false, kMasc},   {"sie", "sie", "ihr", 3, false, kFem},
                {"es", "es", "ihm", 3, false, kNeut},    {"wir", "uns", "uns", 1, true, kMasc},
                {"ihr", "euch", "euch", 2, true, kMasc}, {"sie", "sie", "ihnen", 3, true, kMasc}};
    names = {"Mama", "Papa", "Oma", "Opa", "Lisa", "Tom", "Anna", "Max", "Paul", "Lena", "Emma", "Ben", "Mia", "Leon"};
    adverbs = {"jetzt", "heute", "gleich", "schon", "wieder", "gern", "schnell", "laut", "leise", "hier", "da",
               "draußen", "drinnen", "immer", "morgen", "noch", "auch", "sehr", "oft", "bald", "oben", "unten"};
    places = {"in", "auf", "unter", "neben", "hinter", "mit", "bei", "vor"};
  }

  // ---- helpers --------------------------------------------------------------

  std::size_t pick(std::size_t n) { return static_cast<std::size_t>(rng.index(n)); }
  bool chance(double p) { return rng.uniform() < p; }
  template <typename T>
  const T& one(const std::vector<T>& v) {
    return v[pick(v.size())];
  }
  const Verb& weighted_verb(const std::vector<Verb>& v) {
    // Zipf-like preference for earlier (more frequent) verbs.
    const double u = rng.uniform();
    const auto idx = static_cast<std::size_t>(std::floor(std::pow(u, 1.6) * static_cast<double>(v.size())));
    return v[std::min(idx, v.size() - 1)];
  }

  const Verb& verb_named(std::string_view inf) const {
    for (const auto& v : transitive) {
      if (v.inf == inf) return v;
    }
    throw Error("unknown verb " + std::string(inf));
  }

  const Noun& noun(int kind_mask = 0) {
    while (true) {
      const double u = rng.uniform() * noun_cdf.back();
      const auto it = std::upper_bound(noun_cdf.begin(), noun_cdf.end(), u);
      const Noun& n = nouns[static_cast<std::size_t>(std::min<long>(it - noun_cdf.begin(),
                                                                     static_cast<long>(nouns.size()) - 1))];
      if (kind_mask == 0 || (kind_mask & (1 << n.kind))) return n;
    }
  }

  static std::string det_form(Det d, Gender g, bool plural, Case c, const std::string& poss_stem) {
    static const char* def[3][4] = {{"der", "die", "das", "die"}, {"den", "die", "das", "die"},
                                    {"dem", "der", "dem", "den"}};
    static const char* indef[3][3] = {{"ein", "eine", "ein"}, {"einen", "eine", "ein"}, {"einem", "einer", "einem"}};
    static const char* poss_end[3][4] = {{"", "e", "", "e"}, {"en", "e", "", "e"}, {"em", "er", "em", "en"}};
    const int col = plural ? 3 : g;
    switch (d) {
      case Det::def: return def[c][col];
      case Det::indef: return plural ? "" : indef[c][g];
      case Det::poss: return poss_stem + poss_end[c][col];
      case Det::none: return "";
    }
    return "";
  }

  static std::string adj_ending(Det d, Gender g, bool plural, Case c) {
    if (plural) return (d == Det::none || d == Det::indef) && c != kDat ? "e" : "en";
    if (c == kDat) return "en";
    if (d == Det::def) return (c == kAcc && g == kMasc) ? "en" : "e";
    if (c == kAcc && g == kMasc) return "en";
    return g == kMasc ? "er" : g == kFem ? "e" : "es";
  }

  // Noun phrase; returns the noun index. Determiner and adjective attach to the noun.
  int np(Sent& s, const Noun& n, bool plural, Case c, Det d, bool with_adj, const std::string& poss = "mein") {
    if (d == Det::indef && plural) d = Det::none;
    int det = -1, adj = -1;
    const std::string art = det_form(d, n.gender, plural, c, poss);
    const std::string num = plural ? "Plur" : "Sing";
    if (!art.empty()) {
      const std::string lemma = d == Det::def ? "der" : d == Det::indef ? "ein" : poss;
      const std::string type = d == Det::poss ? "Prs" : "Art";
      det = s.add(art, lemma, "DET",
                  std::string("Case=") + kCaseFeat[c] + "|Gender=" + kGenderFeat[n.gender] + "|Number=" + num +
                      "|PronType=" + type + (d == Det::poss ? "|Poss=Yes" : ""));
    }
    if (with_adj) {
      const Adj* a = nullptr;
      while (!a || !a->attributive) a = &one(adjectives);
      std::string base = a->base;
      adj = s.add(base + adj_ending(d, n.gender, plural, c), base, "ADJ",
                  std::string("Case=") + kCaseFeat[c] + "|Degree=Pos|Number=" + num);
    }
    const int head = s.add(n.form(plural, c), n.sg, "NOUN", noun_feats(n, plural, c));
    if (det >= 0) s.link(det, head, "det");
    if (adj >= 0) s.link(adj, head, "amod");
    return head;
  }

  Det random_det() {
    const double u = rng.uniform();
    return u < 0.55 ? Det::def : u < 0.85 ? Det::indef : Det::poss;
  }

  int random_np(Sent& s, Case c, bool* plural_out = nullptr, int kind_mask = 0) {
    const bool plural = chance(0.35);
    if (plural_out) *plural_out = plural;
    const Det d = random_det();
    return np(s, noun(kind_mask), plural, c, d, chance(0.25), chance(0.6) ? "mein" : "dein");
  }

  int pronoun(Sent& s, const Pronoun& p, Case c) {
    const std::string& form = c == kNom ? p.nom : c == kAcc ? p.acc : p.dat;
    std::string feats = std::string("Case=") + kCaseFeat[c] + "|Number=" + (p.plural ? "Plur" : "Sing") +
                        "|Person=" + std::to_string(p.person) + "|PronType=Prs";
    if (p.person == 3 && !p.plural) feats += std::string("|Gender=") + kGenderFeat[p.gender];
    return s.add(form, p.person == 3 && p.plural ? "sie" : p.nom, "PRON", feats);
  }

  // Subject: pronoun, name or noun phrase (animate preferred).
  Subject subject(Sent& s) {
    Subject sub;
    const double u = rng.uniform();
    if (u < 0.3) {
      const Pronoun& p = one(pronouns);
      sub.head = pronoun(s, p, kNom);
      sub.agreement = slot(p.person, p.plural);
    } else if (u < 0.42) {
      sub.head = s.add(one(names), "", "PROPN", "Case=Nom|Number=Sing");
      s.t.back().lemma = s.t.back().form;
      sub.agreement = 2;
    } else {
      bool plural = false;
      sub.head = random_np(s, kNom, &plural, chance(0.8) ? (1 << kPerson) | (1 << kAnimal) : 0);
      sub.agreement = plural ? 5 : 2;
    }
    return sub;
  }

  int object(Sent& s) {
    if (chance(0.15)) {
      const Pronoun& p = one(pronouns);
      return pronoun(s, p, kAcc);
    }
    return random_np(s, kAcc);
  }

  int finite(Sent& s, const Verb& v, int agreement, const std::string& upos = "VERB") {
    return s.add(v.forms[static_cast<std::size_t>(agreement)], v.inf, upos, verb_feats(agreement));
  }

  int infinitive(Sent& s, const Verb& v) { return s.add(v.inf, v.inf, "VERB", "VerbForm=Inf"); }

  int adverb(Sent& s) { return s.add(one(adverbs), "", "ADV"); }

  // Prepositional phrase with a dative noun; returns the noun.
  int pp(Sent& s) {
    const std::string prep = one(places);
    const Noun& n = noun(chance(0.7) ? (1 << kPlace) | (1 << kThing) : 0);
    const bool plural = chance(0.2);
    if (!plural && n.gender != kFem && (prep == "in" || prep == "bei") && chance(0.6)) {
      const int p = s.add(prep == "in" ? "im" : "beim", prep, "ADP",
                          std::string("AdpType=Preart|Case=Dat|Gender=") + kGenderFeat[n.gender] + "|Number=Sing");
      const int head = np(s, n, false, kDat, Det::none, chance(0.2));
      s.link(p, head, "case");
      return head;
    }
    const int p = s.add(prep, prep, "ADP", "AdpType=Prep");
    const int head = np(s, n, plural, kDat, random_det(), chance(0.2));
    s.link(p, head, "case");
    return head;
  }

  void fix_lemmas(Sent& s) {
    for (auto& t : s.t) {
      if (t.lemma.empty()) t.lemma = t.form;
    }
  }

  // Optional adverb or prepositional phrase attached to `verb`.
  void modifier(Sent& s, int verb, double p_adv, double p_pp) {
    if (chance(p_adv)) s.link(adverb(s), verb, "advmod");
    if (chance(p_pp)) s.link(pp(s), verb, "obl");
  }

  AnnotatedUtterance finish(Sent& s, const std::string& id) {
    fix_lemmas(s);
    int root = -1;
    for (std::size_t i = 0; i < s.t.size(); ++i) {
      if (s.t[i].head == -2) throw Error("synthetic grammar left token '" + s.t[i].form + "' unattached");
      if (s.t[i].head == AnnotatedToken::kRoot) root = static_cast<int>(i);
    }
    if (root < 0) throw Error("synthetic utterance has no root");
    s.t.front().form = capitalize(s.t.front().form);
    for (std::size_t i = 0; i + 1 < s.t.size(); ++i) {
      const auto& next = s.t[i + 1];
      if (next.upos == "PUNCT") s.t[i].space_after = false;
    }
    s.t.back().space_after = false;
    AnnotatedUtterance u;
    u.id = id;
    u.tokens = std::move(s.t);
    u.text = detokenize(u.tokens);
    u.word_count = count_words(u.tokens);
    return u;
  }

  // ---- constructions ------------------------------------------------------------

  void spi(Sent& s) {
    const Verb& v = weighted_verb(intransitive);
    const double u = rng.uniform();
    if (u < 0.55) {
      const Subject sub = subject(s);
      const int verb = finite(s, v, sub.agreement);
      s.link(verb, AnnotatedToken::kRoot, "root");
      s.link(sub.head, verb, "nsubj");
      modifier(s, verb, 0.35, 0.3);
      s.punct(chance(0.85) ? "." : "!", verb);
    } else if (u < 0.8) {
      // Fronted adverb, subject after the verb.
      const int adv = adverb(s);
      const int verb = s.add("", "", "VERB");
      const Subject sub = subject(s);
      set_finite(s, verb, v, sub.agreement, "VERB");
      s.link(verb, AnnotatedToken::kRoot, "root");
      s.link(adv, verb, "advmod");
      s.link(sub.head, verb, "nsubj");
      if (chance(0.3)) s.link(pp(s), verb, "obl");
      s.punct(".", verb);
    } else {
      const Subject sub = subject(s);
      const int modal = finite(s, one(modals), sub.agreement, "AUX");
      if (chance(0.3)) s.link(adverb(s), -3, "advmod");  // head fixed below
      const int verb = infinitive(s, v);
      for (auto& t : s.t) {
        if (t.head == -3) t.head = verb;
      }
      s.link(verb, AnnotatedToken::kRoot, "root");
      s.link(sub.head, verb, "nsubj");
      s.link(modal, verb, "aux");
      s.punct(".", verb);
    }
  }

  // Finite verb placed at index `pos` after its agreement is known.
  void set_finite(Sent& s, int pos, const Verb& v, int agreement, const std::string& upos) {
    auto& t = s.t[static_cast<std::size_t>(pos)];
    Sent feats;
    feats.add("x", "x", "X", verb_feats(agreement));
    t.form = v.forms[static_cast<std::size_t>(agreement)];
    t.lemma = v.inf;
    t.upos = upos;
    t.morph = feats.t[0].morph;
  }

  void spt(Sent& s) {
    const Verb& v = weighted_verb(transitive);
    const double u = rng.uniform();
    if (u < 0.55) {
      const Subject sub = subject(s);
      const int verb = finite(s, v, sub.agreement);
      const int obj = object(s);
      s.link(verb, AnnotatedToken::kRoot, "root");
      s.link(sub.head, verb, "nsubj");
      s.link(obj, verb, "obj");
      modifier(s, verb, 0.25, 0.2);
      s.punct(chance(0.9) ? "." : "!", verb);
    } else if (u < 0.75) {
      const int adv = adverb(s);
      const int verb = s.add("", "", "VERB");
      const Subject sub = subject(s);
      set_finite(s, verb, v, sub.agreement, "VERB");
      const int obj = object(s);
      s.link(verb, AnnotatedToken::kRoot, "root");
      s.link(adv, verb, "advmod");
      s.link(sub.head, verb, "nsubj");
      s.link(obj, verb, "obj");
      s.punct(".", verb);
    } else {
      const Subject sub = subject(s);
      const int modal = finite(s, one(modals), sub.agreement, "AUX");
      const int obj = object(s);
      const int verb = infinitive(s, v);
      s.link(verb, AnnotatedToken::kRoot, "root");
      s.link(sub.head, verb, "nsubj");
      s.link(modal, verb, "aux");
      s.link(obj, verb, "obj");
      s.punct(".", verb);
    }
  }

  int predicate_adj(Sent& s) {
    const Adj& a = one(adjectives);
    return s.add(a.base, a.base, "ADJ", "Degree=Pos");
  }

  void cop(Sent& s) {
    const double u = rng.uniform();
    if (u < 0.45) {
      const Subject sub = subject(s);
      const int aux = finite(s, chance(0.85) ? sein : werden, sub.agreement, "AUX");
      if (chance(0.3)) {
        const int adv = s.add(chance(0.5) ? "sehr" : "so", "", "ADV");
        const int adj = predicate_adj(s);
        s.link(adv, adj, "advmod");
        s.link(adj, AnnotatedToken::kRoot, "root");
        s.link(sub.head, adj, "nsubj");
        s.link(aux, adj, "cop");
        s.punct(".", adj);
      } else {
        const int adj = predicate_adj(s);
        s.link(adj, AnnotatedToken::kRoot, "root");
        s.link(sub.head, adj, "nsubj");
        s.link(aux, adj, "cop");
        s.punct(chance(0.8) ? "." : "!", adj);
      }
    } else if (u < 0.7) {
      const int subj = s.add(chance(0.7) ? "das" : "es", "", "PRON", "Case=Nom|Gender=Neut|Number=Sing|PronType=Dem");
      const bool plural = chance(0.25);
      const int aux = finite(s, sein, plural ? 5 : 2, "AUX");
      const int pred = np(s, noun(), plural, kNom, plural ? Det::none : (chance(0.7) ? Det::indef : Det::poss),
                          chance(0.3), chance(0.5) ? "mein" : "dein");
      s.link(pred, AnnotatedToken::kRoot, "root");
      s.link(subj, pred, "nsubj");
      s.link(aux, pred, "cop");
      s.punct(".", pred);
    } else if (u < 0.85) {
      const Subject sub = subject(s);
      const int aux = finite(s, sein, sub.agreement, "AUX");
      const int place = pp(s);
      s.link(place, AnnotatedToken::kRoot, "root");
      s.link(sub.head, place, "nsubj");
      s.link(aux, place, "cop");
      s.punct(".", place);
    } else {
      const int adv = adverb(s);
      const int aux = s.add("", "", "AUX");
      const Subject sub = subject(s);
      set_finite(s, aux, chance(0.7) ? sein : werden, sub.agreement, "AUX");
      const int adj = predicate_adj(s);
      s.link(adj, AnnotatedToken::kRoot, "root");
      s.link(adv, adj, "advmod");
      s.link(sub.head, adj, "nsubj");
      s.link(aux, adj, "cop");
      s.punct(".", adj);
    }
  }

  void qyn(Sent& s) {
    const double u = rng.uniform();
    const int lead = s.add("", "", "VERB");
    const Subject sub = subject(s);
    if (u < 0.35) {
      const Verb& v = weighted_verb(intransitive);
      set_finite(s, lead, v, sub.agreement, "VERB");
      s.link(lead, AnnotatedToken::kRoot, "root");
      s.link(sub.head, lead, "nsubj");
      modifier(s, lead, 0.3, 0.2);
      s.punct("?", lead);
    } else if (u < 0.6) {
      const Verb& v = weighted_verb(transitive);
      set_finite(s, lead, v, sub.agreement, "VERB");
      const int obj = object(s);
      s.link(lead, AnnotatedToken::kRoot, "root");
      s.link(sub.head, lead, "nsubj");
      s.link(obj, lead, "obj");
      modifier(s, lead, 0.2, 0.0);
      s.punct("?", lead);
    } else if (u < 0.8) {
      set_finite(s, lead, sein, sub.agreement, "AUX");
      const int adj = predicate_adj(s);
      s.link(adj, AnnotatedToken::kRoot, "root");
      s.link(sub.head, adj, "nsubj");
      s.link(lead, adj, "cop");
      s.punct("?", adj);
    } else {
      set_finite(s, lead, one(modals), sub.agreement, "AUX");
      int obj = -1;
      const bool trans = chance(0.5);
      if (trans) obj = object(s);
      const int verb = infinitive(s, trans ? weighted_verb(transitive) : weighted_verb(intransitive));
      s.link(verb, AnnotatedToken::kRoot, "root");
      s.link(sub.head, verb, "nsubj");
      s.link(lead, verb, "aux");
      if (obj >= 0) s.link(obj, verb, "obj");
      s.punct("?", verb);
    }
  }

  void qwh(Sent& s) {
    const double u = rng.uniform();
    if (u < 0.3) {
      const int wh = s.add("was", "was", "PRON", "Case=Acc|Number=Sing|PronType=Int");
      const int verb = s.add("", "", "VERB");
      const Subject sub = subject(s);
      set_finite(s, verb, chance(0.4) ? verb_named("machen") : weighted_verb(transitive), sub.agreement, "VERB");
      s.link(verb, AnnotatedToken::kRoot, "root");
      s.link(wh, verb, "obj");
      s.link(sub.head, verb, "nsubj");
      modifier(s, verb, 0.2, 0.15);
      s.punct("?", verb);
    } else if (u < 0.45) {
      const int wh = s.add("wer", "wer", "PRON", "Case=Nom|Number=Sing|PronType=Int");
      const bool trans = chance(0.5);
      const int verb = finite(s, trans ? weighted_verb(transitive) : weighted_verb(intransitive), 2);
      s.link(verb, AnnotatedToken::kRoot, "root");
      s.link(wh, verb, "nsubj");
      if (trans) s.link(object(s), verb, "obj");
      modifier(s, verb, 0.2, 0.2);
      s.punct("?", verb);
    } else if (u < 0.6) {
      const int wh = s.add("wo", "wo", "ADV", "PronType=Int");
      const int aux = s.add("", "", "AUX");
      const Subject sub = subject(s);
      set_finite(s, aux, sein, sub.agreement, "AUX");
      s.link(wh, AnnotatedToken::kRoot, "root");
      s.link(aux, wh, "cop");
      s.link(sub.head, wh, "nsubj");
      s.punct("?", wh);
    } else if (u < 0.8) {
      static const std::vector<std::string> adverbial{"warum", "wann", "wie", "wohin", "wieso"};
      const std::string w = one(adverbial);
      const int wh = s.add(w, w, "ADV", "PronType=Int");
      const int verb = s.add("", "", "VERB");
      const Subject sub = subject(s);
      set_finite(s, verb, weighted_verb(intransitive), sub.agreement, "VERB");
      s.link(verb, AnnotatedToken::kRoot, "root");
      s.link(wh, verb, "advmod");
      s.link(sub.head, verb, "nsubj");
      s.punct("?", verb);
    } else if (u < 0.9) {
      const int prep = s.add("mit", "mit", "ADP", "AdpType=Prep");
      const int wh = s.add("wem", "wer", "PRON", "Case=Dat|Number=Sing|PronType=Int");
      const int verb = s.add("", "", "VERB");
      const Subject sub = subject(s);
      set_finite(s, verb, weighted_verb(intransitive), sub.agreement, "VERB");
      s.link(verb, AnnotatedToken::kRoot, "root");
      s.link(prep, wh, "case");
      s.link(wh, verb, "obl");
      s.link(sub.head, verb, "nsubj");
      s.punct("?", verb);
    } else {
      const Noun& n = noun(1 << kThing | 1 << kFood | 1 << kAnimal);
      static const char* endings[3] = {"en", "e", "es"};
      const int wh = s.add(std::string("welch") + endings[n.gender], "welcher", "DET",
                           std::string("Case=Acc|Gender=") + kGenderFeat[n.gender] + "|Number=Sing|PronType=Int");
      const int obj = s.add(n.sg, n.sg, "NOUN", noun_feats(n, false, kAcc));
      s.link(wh, obj, "det");
      const int verb = s.add("", "", "VERB");
      const Subject sub = subject(s);
      set_finite(s, verb, weighted_verb(transitive), sub.agreement, "VERB");
      s.link(verb, AnnotatedToken::kRoot, "root");
      s.link(obj, verb, "obj");
      s.link(sub.head, verb, "nsubj");
      s.punct("?", verb);
    }
  }

  void imp(Sent& s) {
    const double u = rng.uniform();
    int intro = -1;
    if (u < 0.2) intro = s.add("bitte", "bitte", "ADV");
    const bool plural = chance(0.2);
    const bool trans = chance(0.6);
    const Verb* v = nullptr;
    while (!v || !v->imperative) v = trans ? &weighted_verb(transitive) : &weighted_verb(intransitive);
    const int verb = s.add(plural ? v->imp_pl : v->imp_sg, v->inf, "VERB",
                           std::string("Mood=Imp|Number=") + (plural ? "Plur" : "Sing") + "|Person=2|VerbForm=Fin");
    s.link(verb, AnnotatedToken::kRoot, "root");
    if (intro >= 0) s.link(intro, verb, "advmod");
    if (chance(0.25)) s.link(s.add(chance(0.5) ? "mal" : "doch", "", "ADV"), verb, "advmod");
    if (trans) s.link(object(s), verb, "obj");
    if (chance(0.25)) {
      if (chance(0.5)) {
        s.link(adverb(s), verb, "advmod");
      } else {
        s.link(pp(s), verb, "obl");
      }
    }
    s.punct(chance(0.6) ? "!" : ".", verb);
  }

  // Subordinate clause with the finite verb last; returns the verb.
  int verb_final_clause(Sent& s, const std::string& mark) {
    const int m = s.add(mark, mark, "SCONJ");
    const Subject sub = subject(s);
    int obj = -1;
    const bool trans = chance(0.4);
    if (trans) obj = object(s);
    else if (chance(0.3)) s.link(adverb(s), -3, "advmod");
    const int verb = finite(s, trans ? weighted_verb(transitive) : weighted_verb(intransitive), sub.agreement);
    for (auto& t : s.t) {
      if (t.head == -3) t.head = verb;
    }
    s.link(m, verb, "mark");
    s.link(sub.head, verb, "nsubj");
    if (obj >= 0) s.link(obj, verb, "obj");
    return verb;
  }

  void com(Sent& s) {
    const double u = rng.uniform();
    if (u < 0.25) {
      const Subject sub = subject(s);
      const int main = finite(s, one(thinking), sub.agreement);
      s.link(main, AnnotatedToken::kRoot, "root");
      s.link(sub.head, main, "nsubj");
      s.punct(",", -3);
      const int comma = static_cast<int>(s.t.size()) - 1;
      const int emb = verb_final_clause(s, "dass");
      s.link(comma, emb, "punct");
      s.link(emb, main, "ccomp");
      s.punct(".", main);
    } else if (u < 0.45) {
      const Subject sub = subject(s);
      const int v1 = finite(s, weighted_verb(intransitive), sub.agreement);
      s.link(v1, AnnotatedToken::kRoot, "root");
      s.link(sub.head, v1, "nsubj");
      const int cc = s.add("und", "und", "CCONJ");
      const Subject sub2 = subject(s);
      const bool trans = chance(0.4);
      const int v2 = finite(s, trans ? weighted_verb(transitive) : weighted_verb(intransitive), sub2.agreement);
      if (trans) s.link(object(s), v2, "obj");
      s.link(cc, v2, "cc");
      s.link(sub2.head, v2, "nsubj");
      s.link(v2, v1, "conj");
      s.punct(".", v1);
    } else if (u < 0.6) {
      const Subject sub = subject(s);
      const int v1 = finite(s, weighted_verb(intransitive), sub.agreement);
      s.link(v1, AnnotatedToken::kRoot, "root");
      s.link(sub.head, v1, "nsubj");
      const int comma = s.punct(",", v1);
      const int v2 = verb_final_clause(s, chance(0.6) ? "weil" : "wenn");
      s.link(comma, v2, "punct");
      s.link(v2, v1, "advcl");
      s.punct(".", v1);
    } else if (u < 0.75) {
      const int v2 = verb_final_clause(s, "wenn");
      const int comma = s.punct(",", v2);
      const int v1 = s.add("", "", "VERB");
      const Subject sub = subject(s);
      set_finite(s, v1, weighted_verb(intransitive), sub.agreement, "VERB");
      s.link(v1, AnnotatedToken::kRoot, "root");
      s.link(v2, v1, "advcl");
      s.link(sub.head, v1, "nsubj");
      (void)comma;
      s.punct(".", v1);
    } else if (u < 0.88) {
      // Subject with a relative clause.
      const Noun& n = noun((1 << kPerson) | (1 << kAnimal));
      const bool plural = chance(0.4);
      const int subj = np(s, n, plural, kNom, Det::def, chance(0.2));
      const int c1 = s.punct(",", -3);
      static const char* rel_nom[4] = {"der", "die", "das", "die"};
      const int rel = s.add(rel_nom[plural ? 3 : n.gender], "der", "PRON", "Case=Nom|PronType=Rel");
      const int agreement = plural ? 5 : 2;
      const int rv = finite(s, weighted_verb(intransitive), agreement);
      const int c2 = s.punct(",", -3);
      const int mv = finite(s, weighted_verb(intransitive), agreement);
      s.link(mv, AnnotatedToken::kRoot, "root");
      s.link(subj, mv, "nsubj");
      s.link(rv, subj, "acl:relcl");
      s.link(rel, rv, "nsubj");
      s.link(c1, rv, "punct");
      s.link(c2, rv, "punct");
      modifier(s, mv, 0.2, 0.0);
      s.punct(".", mv);
    } else {
      const Subject sub = subject(s);
      const int v1 = finite(s, weighted_verb(transitive), sub.agreement);
      s.link(v1, AnnotatedToken::kRoot, "root");
      s.link(sub.head, v1, "nsubj");
      s.link(object(s), v1, "obj");
      const int cc = s.add("und", "und", "CCONJ");
      const int v2 = finite(s, weighted_verb(intransitive), sub.agreement);
      s.link(cc, v2, "cc");
      s.link(v2, v1, "conj");
      s.punct(".", v1);
    }
  }

  void fra(Sent& s) {
    const double u = rng.uniform();
    static const std::vector<std::string> interjections{"ja", "nein", "oh", "danke", "genau", "hallo", "tschüss",
                                                        "okay", "prima", "super", "ach", "hm", "au", "hurra"};
    if (u < 0.35) {
      int intro = -1;
      if (chance(0.3)) {
        intro = s.add(one(interjections), "", "INTJ");
        s.punct(",", -3);
      }
      const int head = random_np(s, kNom);
      s.link(head, AnnotatedToken::kRoot, "root");
      if (intro >= 0) {
        s.link(intro, head, "discourse");
        s.link(intro + 1, head, "punct");
      }
      s.punct(chance(0.4) ? "!" : chance(0.5) ? "." : "?", head);
    } else if (u < 0.55) {
      const int head = s.add(one(interjections), "", "INTJ");
      s.link(head, AnnotatedToken::kRoot, "root");
      s.punct(chance(0.5) ? "." : "!", head);
    } else if (u < 0.65) {
      static const std::vector<std::pair<std::string, std::string>> adv_frags{
          {"und", "jetzt"}, {"noch", "einmal"}, {"schon", "wieder"}, {"nicht", "so"},
          {"gleich", "da"}, {"hier", "oben"},   {"da", "drüben"},     {"sehr", "gut"}};
      const auto& [a, b] = one(adv_frags);
      const int first = s.add(a, a, a == "und" ? "CCONJ" : a == "nicht" ? "PART" : "ADV");
      const int second = s.add(b, b, b == "gut" ? "ADJ" : "ADV");
      s.link(second, AnnotatedToken::kRoot, "root");
      s.link(first, second, a == "und" ? "cc" : "advmod");
      s.punct(chance(0.5) ? "?" : "!", second);
    } else if (u < 0.75) {
      const int adj = predicate_adj(s);
      s.link(adj, AnnotatedToken::kRoot, "root");
      s.punct("!", adj);
    } else if (u < 0.85) {
      const int head = pp(s);
      s.link(head, AnnotatedToken::kRoot, "root");
      s.punct(chance(0.5) ? "." : "?", head);
    } else if (u < 0.93) {
      const int adv = s.add("noch", "noch", "ADV");
      const Noun& n = noun();
      const int head = np(s, n, false, kNom, Det::indef, false);
      s.link(adv, head, "advmod");
      s.link(head, AnnotatedToken::kRoot, "root");
      s.punct("?", head);
    } else {
      const int name = s.add(one(names), "", "PROPN", "Case=Nom|Number=Sing");
      s.link(name, AnnotatedToken::kRoot, "root");
      s.punct(chance(0.5) ? "?" : "!", name);
    }
  }

  AnnotatedUtterance make(ConstructionLabel label, const std::string& id) {
    Sent s;
    switch (label) {
      case ConstructionLabel::FRA: fra(s); break;
      case ConstructionLabel::QWH: qwh(s); break;
      case ConstructionLabel::QYN: qyn(s); break;
      case ConstructionLabel::COP: cop(s); break;
      case ConstructionLabel::IMP: imp(s); break;
      case ConstructionLabel::SPI: spi(s); break;
      case ConstructionLabel::SPT: spt(s); break;
      case ConstructionLabel::COM: com(s); break;
    }
    return finish(s, id);
  }
};

}  // namespace

struct Grammar::Impl : GrammarImpl {
  using GrammarImpl::GrammarImpl;
};

Grammar::Grammar(std::uint64_t seed) : impl_(std::make_unique<Impl>(seed)) {}
Grammar::~Grammar() = default;
Grammar::Grammar(Grammar&&) noexcept = default;
Grammar& Grammar::operator=(Grammar&&) noexcept = default;

AnnotatedUtterance Grammar::utterance(ConstructionLabel label, const std::string& id) { return impl_->make(label, id); }

std::vector<std::string> Grammar::word_forms() const {
  std::set<std::string> forms;
  const auto& g = *impl_;
  for (const auto& n : g.nouns) {
    forms.insert(n.sg);
    forms.insert(n.pl);
    forms.insert(n.form(true, kDat));
  }
  auto add_verb = [&](const Verb& v) {
    forms.insert(v.inf);
    for (const auto& f : v.forms) forms.insert(f);
    if (!v.imp_sg.empty()) forms.insert(v.imp_sg);
    if (!v.imp_pl.empty()) forms.insert(v.imp_pl);
  };
  for (const auto* list : {&g.intransitive, &g.transitive, &g.thinking, &g.modals}) {
    for (const auto& v : *list) add_verb(v);
  }
  add_verb(g.sein);
  add_verb(g.werden);
  for (const auto& a : g.adjectives) {
    forms.insert(a.base);
    for (const char* e : {"e", "en", "er", "es", "em"}) forms.insert(a.base + e);
  }
  for (const auto& p : g.pronouns) {
    forms.insert(p.nom);
    forms.insert(p.acc);
    forms.insert(p.dat);
  }
  for (const auto& n : g.names) forms.insert(n);
  for (const auto& a : g.adverbs) forms.insert(a);
  for (const auto& p : g.places) forms.insert(p);
  for (const char* w : {"der", "die", "das", "den", "dem", "des", "ein", "eine", "einen", "einem", "einer", "eines",
                        "mein", "meine", "meinen", "meinem", "meiner", "dein", "deine", "deinen", "deinem", "deiner",
                        "im", "beim", "was", "wer", "wem", "wo", "warum", "wann", "wie", "wohin", "wieso",
                        "welchen", "welche", "welches", "dass", "weil", "wenn", "und", "bitte", "mal", "doch",
                        "sehr", "so", "ja", "nein", "oh", "danke", "genau", "hallo", "tschüss", "okay", "prima",
                        "super", "ach", "hm", "au", "hurra", "jetzt", "einmal", "nicht", "gut", "drüben", "noch",
                        "mit", "es"}) {
    forms.insert(w);
  }
  std::vector<std::string> out;
  for (const auto& f : forms) {
    out.push_back(f);
    out.push_back(capitalize(f));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<AnnotatedUtterance> generate(ConstructionLabel label, std::size_t n, std::uint64_t seed,
                                         const SubcorpusId& subcorpus) {
  Grammar g(derive_seed(seed, index_of(label)));
  std::vector<AnnotatedUtterance> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    auto u = g.utterance(label, subcorpus + "-" + std::string(to_string(label)) + "-" + std::to_string(k + 1));
    u.subcorpus = subcorpus;
    out.push_back(std::move(u));
  }
  return out;
}

std::vector<AnnotatedUtterance> generate_mixed(const std::array<double, kNumLabels>& weights,
                                               std::size_t target_words, std::uint64_t seed,
                                               const SubcorpusId& subcorpus) {
  Grammar g(seed);
  Rng pick(derive_seed(seed, 99));
  double total = 0;
  for (double w : weights) total += w;
  if (!(total > 0)) throw DataError("label weights must not all be zero");
  std::vector<AnnotatedUtterance> out;
  std::size_t words = 0;
  while (words < target_words) {
    double u = pick.uniform() * total;
    std::size_t l = 0;
    while (l + 1 < kNumLabels && u >= weights[l]) u -= weights[l++];
    auto utt = g.utterance(kAllLabels[l], subcorpus + "-" + std::to_string(out.size() + 1));
    utt.subcorpus = subcorpus;
    words += utt.word_count;
    out.push_back(std::move(utt));
  }
  return out;
}

// ---- benchmarks ---------------------------------------------------------------

namespace {


std::string def_article(const Noun& n, bool plural, Case c) {
  static const char* def[3][4] = {{"der", "die", "das", "die"}, {"den", "die", "das", "die"},
                                  {"dem", "der", "dem", "den"}};
  return def[c][plural ? 3 : n.gender];
}

std::string rel_pronoun(const Noun& n, bool plural, Case c) {
  static const char* rel[2][4] = {{"der", "die", "das", "die"}, {"den", "die", "das", "die"}};
  return rel[c == kAcc ? 1 : 0][plural ? 3 : n.gender];
}

}  // namespace

std::vector<MinimalPair> agreement_pairs(std::size_t per_phenomenon, std::uint64_t seed) {
  GrammarImpl impl(seed);
  Rng rng(derive_seed(seed, 5));
  std::vector<Noun> subjects, places, objects;
  for (std::size_t i = 0; i < 90 && i < impl.nouns.size(); ++i) {
    const Noun& n = impl.nouns[i];
    if (n.compound || n.sg == n.pl) continue;  // number must be visible on the noun
    if (n.kind == kPerson || n.kind == kAnimal) subjects.push_back(n);
    if (n.kind == kPlace || n.kind == kThing) places.push_back(n);
    if (n.kind == kThing || n.kind == kFood) objects.push_back(n);
  }
  std::vector<Verb> verbs(impl.intransitive.begin(), impl.intransitive.begin() + 16);
  std::vector<Verb> trans(impl.transitive.begin(), impl.transitive.begin() + 16);
  auto one_noun = [&](const std::vector<Noun>& v) -> const Noun& { return v[rng.index(v.size())]; };
  auto one_verb = [&](const std::vector<Verb>& v) -> const Verb& { return v[rng.index(v.size())]; };
  auto np = [&](const Noun& n, bool plural, Case c) { return def_article(n, plural, c) + " " + n.form(plural, c); };
  static const char* preps[] = {"neben", "hinter", "vor", "bei", "mit"};

  std::vector<MinimalPair> out;
  std::set<std::string> seen;
  const auto& names = agreement_phenomena();
  for (std::size_t ph = 0; ph < names.size(); ++ph) {
    for (std::size_t k = 0; k < per_phenomenon; ++k) {
      const bool plural = k % 2 == 1;
      const int good = plural ? 5 : 2, bad = plural ? 2 : 5;
      std::string good_s, bad_s;
      // Redraw repeated sentences.
      for (int attempt = 0; attempt < 200; ++attempt) {
        const Noun& subj = one_noun(subjects);
        const Verb& v = one_verb(verbs);
        std::string prefix = capitalize(np(subj, plural, kNom));
        switch (ph) {
          case 0:
            good_s = prefix + " " + v.forms[good] + ".";
            bad_s = prefix + " " + v.forms[bad] + ".";
            break;
          case 1: {
            const Noun& attractor = one_noun(places);
            const std::string mid =
                prefix + " " + preps[rng.index(std::size(preps))] + " " + np(attractor, !plural, kDat) + " ";
            good_s = mid + v.forms[good] + ".";
            bad_s = mid + v.forms[bad] + ".";
            break;
          }
          case 2: {
            const Noun& obj = one_noun(subjects);
            const Verb& tv = one_verb(trans);
            const std::string mid = prefix + ", " + rel_pronoun(subj, plural, kNom) + " " + np(obj, !plural, kAcc) +
                                    " " + tv.forms[good] + ", ";
            good_s = mid + v.forms[good] + ".";
            bad_s = mid + v.forms[bad] + ".";
            break;
          }
          case 3: {
            const Verb& v1 = one_verb(verbs);
            const std::string mid = prefix + " " + v1.forms[good] + " und ";
            good_s = mid + v.forms[good] + ".";
            bad_s = mid + v.forms[bad] + ".";
            break;
          }
          case 4: {
            const Verb& tv = one_verb(trans);
            const Noun& obj = one_noun(objects);
            const std::string mid = prefix + " " + tv.forms[good] + " " + impl.adverbs[rng.index(6)] + " " +
                                    np(obj, false, kAcc) + " und ";
            good_s = mid + v.forms[good] + ".";
            bad_s = mid + v.forms[bad] + ".";
            break;
          }
          case 5: {
            const Noun& inner = one_noun(subjects);
            const Verb& tv = one_verb(trans);
            const bool inner_plural = !plural;
            const std::string mid = prefix + ", " + rel_pronoun(subj, plural, kAcc) + " " + np(inner, inner_plural, kNom) +
                                    " " + tv.forms[inner_plural ? 5 : 2] + ", ";
            good_s = mid + v.forms[good] + ".";
            bad_s = mid + v.forms[bad] + ".";
            break;
          }
          case 6: {
            // The inner subject carries the tested number; the outer noun has the opposite one.
            const Noun& outer = one_noun(subjects);
            const Verb& tv = one_verb(trans);
            const bool outer_plural = !plural;
            const std::string head = capitalize(np(outer, outer_plural, kNom)) + ", " +
                                     rel_pronoun(outer, outer_plural, kAcc) + " " + np(subj, plural, kNom) + " ";
            const std::string tail = ", " + v.forms[outer_plural ? 5 : 2] + ".";
            good_s = head + tv.forms[good] + tail;
            bad_s = head + tv.forms[bad] + tail;
            break;
          }
        }
        if (seen.insert(good_s).second) break;
      }
      MinimalPair p;
      p.id = "agr-" + std::to_string(ph + 1) + "-" + std::to_string(k + 1);
      p.phenomenon = names[ph];
      p.good = good_s;
      p.bad = bad_s;
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<MinimalPair> concept_pairs(std::size_t n, std::uint64_t seed) {
  struct Concept {
    const char* article;
    const char* noun;
    std::vector<std::string> properties;
  };
  static const std::vector<Concept> concepts{
      {"Ein", "Hund", {"kann bellen", "hat ein Fell", "ist ein Tier"}},
      {"Eine", "Katze", {"kann miauen", "hat ein Fell", "ist ein Tier"}},
      {"Ein", "Vogel", {"kann fliegen", "hat Federn", "ist ein Tier"}},
      {"Ein", "Fisch", {"kann schwimmen", "lebt im Wasser", "ist ein Tier"}},
      {"Eine", "Ente", {"kann schwimmen", "hat Federn", "kann fliegen", "ist ein Tier"}},
      {"Eine", "Kuh", {"gibt Milch", "hat ein Fell", "ist ein Tier"}},
      {"Ein", "Stein", {"ist hart", "ist schwer"}},
      {"Ein", "Kissen", {"ist weich"}},
      {"Eine", "Banane", {"ist gelb", "kann man essen", "ist süß"}},
      {"Eine", "Tomate", {"ist rot", "kann man essen"}},
      {"Ein", "Apfel", {"kann man essen", "wächst am Baum", "ist süß"}},
      {"Ein", "Messer", {"ist scharf", "ist aus Metall"}},
      {"Ein", "Ball", {"ist rund", "kann rollen"}},
      {"Ein", "Auto", {"hat Räder", "kann fahren"}},
      {"Ein", "Fahrrad", {"hat Räder", "kann fahren"}},
      {"Ein", "Boot", {"kann schwimmen"}},
      {"Ein", "Baum", {"hat Blätter", "wächst im Wald"}},
      {"Eine", "Blume", {"kann blühen", "wächst im Garten"}},
      {"Ein", "Buch", {"hat Seiten", "kann man lesen"}},
      {"Eine", "Lampe", {"kann leuchten"}},
      {"Die", "Sonne", {"ist heiß", "kann leuchten"}},
      {"Das", "Eis", {"ist kalt", "kann schmelzen", "ist süß"}},
      {"Ein", "Flugzeug", {"kann fliegen", "hat Flügel"}},
      {"Eine", "Uhr", {"kann ticken", "hat Zeiger"}},
  };
  std::vector<std::pair<std::size_t, std::size_t>> facts;  // (concept, property)
  for (std::size_t c = 0; c < concepts.size(); ++c) {
    for (std::size_t p = 0; p < concepts[c].properties.size(); ++p) facts.emplace_back(c, p);
  }
  Rng rng(seed);
  rng.shuffle(facts);
  std::vector<MinimalPair> out;
  std::size_t k = 0;
  while (out.size() < n) {
    const auto [c, p] = facts[k % facts.size()];
    ++k;
    const std::string& property = concepts[c].properties[p];
    // A foil lacking the property, found by a seeded scan.
    std::size_t start = rng.index(concepts.size());
    for (std::size_t j = 0; j < concepts.size(); ++j) {
      const auto& foil = concepts[(start + j) % concepts.size()];
      if (std::find(foil.properties.begin(), foil.properties.end(), property) != foil.properties.end()) continue;
      MinimalPair pair;
      pair.id = "concept-" + std::to_string(out.size() + 1);
      pair.phenomenon = "XCOMPS";
      pair.good = std::string(concepts[c].article) + " " + concepts[c].noun + " " + property + ".";
      pair.bad = std::string(foil.article) + " " + foil.noun + " " + property + ".";
      out.push_back(std::move(pair));
      break;
    }
    if (k > 100 * (n + facts.size())) throw DataError("could not build concept pairs");
  }
  return out;
}

}  // namespace cxnlm::synth
