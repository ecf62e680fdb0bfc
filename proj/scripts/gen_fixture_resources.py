#!/usr/bin/env python3
"""Generates the bundled label-mapping fixtures.

Outputs (under data/fixtures/):
  imagenet_vocab.tsv    small classifier vocabulary (class_index, synset, label)
  wordnet/data.noun     noun ontology, WordNet 3.0 flat-file format
  wordnet/index.noun    lemma index for the same ontology
  ontology.tsv          the same ontology as a preprocessed TSV
  embeddings_300d.txt   300-d embedding table over all label tokens
  shape_vocab.tsv       vocabulary of the analytic color-response classifier

The embedding table is constructed, not trained: each token owns one basis
axis and selected tokens carry extra weight on the axes of the query words
(sofa, cat, train, ...). That fixes the cosine rankings this corpus is
expected to produce. The script re-derives every expected ranking from the
written files and refuses to emit anything if one is off.
"""

import math
import os
import random

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data", "fixtures")

# --------------------------------------------------------------------------
# Ontology. key: (lemmas, parents). Internal nodes first, then one synset per
# vocabulary entry. Lemmas are stored lowercase; multi-word lemmas use spaces
# here and underscores in the flat files.
NODES = {
    "entity": (["entity"], []),
    "physical_entity": (["physical entity"], ["entity"]),
    "object": (["object", "physical object"], ["physical_entity"]),
    "whole": (["whole", "unit"], ["object"]),
    "artifact": (["artifact", "artefact"], ["whole"]),
    "instrumentality": (["instrumentality", "instrumentation"], ["artifact"]),
    "conveyance": (["conveyance", "transport"], ["instrumentality"]),
    "vehicle": (["vehicle"], ["conveyance"]),
    "wheeled_vehicle": (["wheeled vehicle"], ["vehicle"]),
    "self_propelled_vehicle": (["self-propelled vehicle"], ["wheeled_vehicle"]),
    "motor_vehicle": (["motor vehicle", "automotive vehicle"], ["self_propelled_vehicle"]),
    "car": (["car", "auto", "automobile", "motorcar"], ["motor_vehicle"]),
    "car_railcar": (["car", "railcar", "railway car", "railroad car"], ["wheeled_vehicle"]),
    "locomotive": (["locomotive", "engine", "locomotive engine", "railway locomotive"],
                   ["self_propelled_vehicle"]),
    "public_transport": (["public transport"], ["conveyance"]),
    "train": (["train", "railroad train"], ["public_transport"]),
    "express_train": (["express", "express train"], ["train"]),
    "bus": (["bus", "autobus", "motorbus", "omnibus"], ["public_transport"]),
    "truck": (["truck", "motortruck"], ["motor_vehicle"]),
    "van": (["van"], ["truck"]),
    "bicycle": (["bicycle", "bike", "cycle"], ["wheeled_vehicle"]),
    "motorcycle": (["motorcycle", "bike"], ["motor_vehicle"]),
    "minibike": (["minibike", "motorbike"], ["motorcycle"]),
    "craft": (["craft"], ["vehicle"]),
    "vessel_watercraft": (["vessel", "watercraft"], ["craft"]),
    "boat": (["boat"], ["vessel_watercraft"]),
    "motorboat": (["motorboat", "powerboat"], ["boat"]),
    "ship": (["ship"], ["vessel_watercraft"]),
    "aircraft": (["aircraft"], ["craft"]),
    "airplane": (["airplane", "aeroplane", "plane"], ["aircraft"]),
    "furnishing": (["furnishing"], ["instrumentality"]),
    "furniture": (["furniture", "piece of furniture"], ["furnishing"]),
    "seat": (["seat"], ["furniture"]),
    "chair": (["chair"], ["seat"]),
    "chair_of_state": (["chair of state"], ["chair"]),
    "sofa": (["sofa", "couch", "lounge"], ["seat"]),
    "table": (["table"], ["furniture"]),
    "bench": (["bench"], ["seat"]),
    "bed": (["bed"], ["furniture"]),
    "cushion": (["cushion"], ["furnishing"]),
    "container": (["container"], ["instrumentality"]),
    "vessel_container": (["vessel"], ["container"]),
    "bottle": (["bottle"], ["vessel_container"]),
    "jar": (["jar"], ["vessel_container"]),
    "mug": (["mug"], ["vessel_container"]),
    "bag": (["bag"], ["container"]),
    "device": (["device"], ["instrumentality"]),
    "machine": (["machine"], ["device"]),
    "computer": (["computer", "computing machine", "computing device"], ["machine"]),
    "personal_computer": (["personal computer", "pc"], ["computer"]),
    "telephone": (["telephone", "phone", "telephone set"], ["electronic_equipment"]),
    "equipment": (["equipment"], ["instrumentality"]),
    "electronic_equipment": (["electronic equipment"], ["equipment"]),
    "display": (["display", "video display"], ["electronic_equipment"]),
    "game_equipment": (["game equipment"], ["equipment"]),
    "ball": (["ball"], ["game_equipment"]),
    "musical_instrument": (["musical instrument", "instrument"], ["device"]),
    "stringed_instrument": (["stringed instrument"], ["musical_instrument"]),
    "wind_instrument": (["wind instrument"], ["musical_instrument"]),
    "guitar": (["guitar"], ["stringed_instrument"]),
    "piano": (["piano", "pianoforte"], ["stringed_instrument"]),
    "light": (["light", "light source"], ["device"]),
    "sign": (["sign"], ["artifact"]),
    "mirror": (["mirror"], ["device"]),
    "wheel": (["wheel"], ["device"]),
    "covering": (["covering"], ["artifact"]),
    "footwear": (["footwear"], ["covering"]),
    "shoe": (["shoe"], ["footwear"]),
    "implement": (["implement"], ["instrumentality"]),
    "utensil": (["utensil"], ["implement"]),
    "cutlery": (["cutlery", "eating utensil"], ["utensil"]),
    "spoon": (["spoon"], ["cutlery"]),
    "pan": (["pan", "cooking pan"], ["utensil"]),
    "organism": (["organism", "being"], ["living_thing"]),
    "living_thing": (["living thing", "animate thing"], ["whole"]),
    "animal": (["animal", "animate being", "beast", "creature", "fauna"], ["organism"]),
    "person": (["person", "individual", "someone", "somebody", "mortal"], ["organism"]),
    "plant": (["plant", "flora", "plant life"], ["organism"]),
    "potted_plant": (["potted plant", "pot plant"], ["plant"]),
    "flower": (["flower"], ["plant"]),
    "chordate": (["chordate"], ["animal"]),
    "vertebrate": (["vertebrate", "craniate"], ["chordate"]),
    "invertebrate": (["invertebrate"], ["animal"]),
    "mammal": (["mammal", "mammalian"], ["vertebrate"]),
    "placental": (["placental", "placental mammal", "eutherian"], ["mammal"]),
    "carnivore": (["carnivore"], ["placental"]),
    "canine": (["canine", "canid"], ["carnivore"]),
    "dog": (["dog", "domestic dog", "canis familiaris"], ["canine"]),
    "hunting_dog": (["hunting dog"], ["dog"]),
    "terrier": (["terrier"], ["hunting_dog"]),
    "fox_terrier": (["fox terrier"], ["terrier"]),
    "toy_dog": (["toy dog", "toy"], ["dog"]),
    "working_dog": (["working dog"], ["dog"]),
    "shepherd_dog": (["shepherd dog"], ["working_dog"]),
    "pinscher": (["pinscher"], ["working_dog"]),
    "feline": (["feline", "felid"], ["carnivore"]),
    "cat": (["cat", "true cat"], ["feline"]),
    "domestic_cat": (["domestic cat", "house cat", "felis domesticus"], ["cat"]),
    "big_cat": (["big cat"], ["feline"]),
    "procyonid": (["procyonid"], ["carnivore"]),
    "rodent": (["rodent", "gnawer"], ["placental"]),
    "ungulate": (["ungulate", "hoofed mammal"], ["placental"]),
    "equine": (["equine", "equid"], ["ungulate"]),
    "horse": (["horse", "equus caballus"], ["equine"]),
    "bovid": (["bovid"], ["ungulate"]),
    "cattle": (["cattle"], ["bovid"]),
    "cow": (["cow", "moo-cow"], ["cattle"]),
    "sheep": (["sheep"], ["bovid"]),
    "swine": (["swine"], ["ungulate"]),
    "bird": (["bird"], ["vertebrate"]),
    "aquatic_bird": (["aquatic bird"], ["bird"]),
    "wading_bird": (["wading bird", "wader"], ["aquatic_bird"]),
    "penguin": (["penguin"], ["aquatic_bird"]),
    "fish": (["fish"], ["vertebrate"]),
    "shark": (["shark"], ["fish"]),
}

# Vocabulary entries: (key, lemmas, parent). The label text shown to the
# classifier user is the comma-joined lemma list, like ImageNet publishes it.
ENTRIES = [
    ("beer_bottle", ["beer bottle"], "bottle"),
    ("pill_bottle", ["pill bottle"], "bottle"),
    ("pop_bottle", ["pop bottle", "soda bottle"], "bottle"),
    ("water_bottle", ["water bottle"], "bottle"),
    ("wine_bottle", ["wine bottle"], "bottle"),
    ("corkscrew", ["corkscrew", "bottle screw"], "device"),
    ("sports_car", ["sports car", "sport car"], "car"),
    ("racer", ["racer", "race car", "racing car"], "car"),
    ("convertible", ["convertible"], "car"),
    ("jeep", ["jeep", "landrover"], "car"),
    ("cab", ["cab", "hack", "taxi", "taxicab"], "car"),
    ("limousine", ["limousine", "limo"], "car"),
    ("ambulance", ["ambulance"], "car"),
    ("streetcar", ["streetcar", "tram", "tramcar", "trolley", "trolley car"],
     "self_propelled_vehicle"),
    ("freight_car", ["freight car"], "car_railcar"),
    ("passenger_car", ["passenger car", "coach", "carriage"], "car_railcar"),
    ("car_wheel", ["car wheel"], "wheel"),
    ("car_mirror", ["car mirror"], "mirror"),
    ("minivan", ["minivan"], "van"),
    ("moving_van", ["moving van"], "van"),
    ("police_van", ["police van", "police wagon", "paddy wagon"], "van"),
    ("pickup", ["pickup", "pickup truck"], "truck"),
    ("tow_truck", ["tow truck", "tow car", "wrecker"], "truck"),
    ("fire_engine", ["fire engine", "fire truck"], "truck"),
    ("garbage_truck", ["garbage truck", "dustcart"], "truck"),
    ("school_bus", ["school bus"], "bus"),
    ("trolleybus", ["trolleybus", "trolley coach", "trackless trolley"], "bus"),
    ("bullet_train", ["bullet train", "bullet"], "express_train"),
    ("steam_locomotive", ["steam locomotive"], "locomotive"),
    ("electric_locomotive", ["electric locomotive"], "locomotive"),
    ("mountain_bike", ["mountain bike", "all-terrain bike", "off-roader"], "bicycle"),
    ("tandem_bicycle", ["bicycle-built-for-two", "tandem bicycle", "tandem"], "bicycle"),
    ("motor_scooter", ["motor scooter", "scooter"], "motorcycle"),
    ("moped", ["moped"], "motorcycle"),
    ("speedboat", ["speedboat"], "motorboat"),
    ("canoe", ["canoe"], "boat"),
    ("yawl", ["yawl", "dandy"], "boat"),
    ("fireboat", ["fireboat"], "boat"),
    ("airliner", ["airliner"], "airplane"),
    ("warplane", ["warplane", "military plane"], "airplane"),
    ("balloon", ["balloon"], "aircraft"),
    ("pug", ["pug", "pug-dog"], "toy_dog"),
    ("chihuahua", ["chihuahua"], "toy_dog"),
    ("toy_terrier", ["toy terrier"], "toy_dog"),
    ("border_terrier", ["border terrier"], "terrier"),
    ("yorkshire_terrier", ["yorkshire terrier"], "terrier"),
    ("tibetan_terrier", ["tibetan terrier", "chrysanthemum dog"], "terrier"),
    ("wirehaired_fox_terrier", ["wire-haired fox terrier"], "fox_terrier"),
    ("german_shepherd", ["german shepherd", "german shepherd dog", "german police dog",
                         "alsatian"], "shepherd_dog"),
    ("affenpinscher", ["affenpinscher", "monkey pinscher", "monkey dog"], "pinscher"),
    ("tabby", ["tabby", "tabby cat"], "domestic_cat"),
    ("tiger_cat", ["tiger cat"], "domestic_cat"),
    ("siamese_cat", ["siamese cat", "siamese"], "domestic_cat"),
    ("egyptian_cat", ["egyptian cat"], "domestic_cat"),
    ("persian_cat", ["persian cat"], "domestic_cat"),
    ("tiger", ["tiger", "panthera tigris"], "big_cat"),
    ("lion", ["lion", "king of beasts", "panthera leo"], "big_cat"),
    ("lesser_panda", ["lesser panda", "red panda", "panda", "bear cat", "cat bear"],
     "procyonid"),
    ("hamster", ["hamster"], "rodent"),
    ("sorrel", ["sorrel"], "horse"),
    ("zebra", ["zebra"], "equine"),
    ("ox", ["ox"], "cattle"),
    ("ram", ["ram", "tup"], "sheep"),
    ("bighorn", ["bighorn", "bighorn sheep", "rocky mountain sheep"], "sheep"),
    ("hog", ["hog", "pig", "grunter", "squealer"], "swine"),
    ("ostrich", ["ostrich", "struthio camelus"], "bird"),
    ("jay", ["jay"], "bird"),
    ("magpie", ["magpie"], "bird"),
    ("hen", ["hen"], "bird"),
    ("flamingo", ["flamingo"], "wading_bird"),
    ("pelican", ["pelican"], "aquatic_bird"),
    ("king_penguin", ["king penguin", "aptenodytes patagonica"], "penguin"),
    ("goldfish", ["goldfish", "carassius auratus"], "fish"),
    ("great_white_shark", ["great white shark", "white shark", "man-eater",
                           "man-eating shark"], "shark"),
    ("jellyfish", ["jellyfish"], "invertebrate"),
    ("snail", ["snail"], "invertebrate"),
    ("folding_chair", ["folding chair"], "chair"),
    ("barber_chair", ["barber chair"], "chair"),
    ("rocking_chair", ["rocking chair", "rocker"], "chair"),
    ("throne", ["throne"], "chair_of_state"),
    ("studio_couch", ["studio couch", "day bed"], "sofa"),
    ("dining_table", ["dining table", "board"], "table"),
    ("desk", ["desk"], "table"),
    ("bookcase", ["bookcase"], "furniture"),
    ("wardrobe", ["wardrobe", "closet", "press"], "furniture"),
    ("pillow", ["pillow"], "cushion"),
    ("park_bench", ["park bench"], "bench"),
    ("cup", ["cup"], "vessel_container"),
    ("teapot", ["teapot"], "vessel_container"),
    ("coffee_mug", ["coffee mug"], "mug"),
    ("frying_pan", ["frying pan", "frypan", "skillet"], "pan"),
    ("wooden_spoon", ["wooden spoon"], "spoon"),
    ("plate", ["plate"], "utensil"),
    ("vase", ["vase"], "jar"),
    ("flowerpot", ["pot", "flowerpot"], "vessel_container"),
    ("acoustic_guitar", ["acoustic guitar"], "guitar"),
    ("electric_guitar", ["electric guitar"], "guitar"),
    ("grand_piano", ["grand piano", "grand"], "piano"),
    ("violin", ["violin", "fiddle"], "stringed_instrument"),
    ("cello", ["cello", "violoncello"], "stringed_instrument"),
    ("flute", ["flute", "transverse flute"], "wind_instrument"),
    ("television", ["television", "television system"], "electronic_equipment"),
    ("monitor", ["monitor"], "electronic_equipment"),
    ("screen", ["screen", "crt screen"], "display"),
    ("laptop", ["laptop", "laptop computer"], "personal_computer"),
    ("desktop_computer", ["desktop computer"], "personal_computer"),
    ("cellular_telephone", ["cellular telephone", "cellular phone", "cellphone",
                            "mobile phone"], "telephone"),
    ("computer_keyboard", ["computer keyboard", "keypad"], "device"),
    ("computer_mouse", ["mouse", "computer mouse"], "device"),
    ("running_shoe", ["running shoe"], "shoe"),
    ("backpack", ["backpack", "back pack", "knapsack", "rucksack"], "bag"),
    ("umbrella", ["umbrella"], "device"),
    ("soccer_ball", ["soccer ball"], "ball"),
    ("basketball", ["basketball"], "ball"),
    ("street_sign", ["street sign"], "sign"),
    ("traffic_light", ["traffic light", "traffic signal", "stoplight"], "light"),
    ("daisy", ["daisy"], "flower"),
]

# Query words whose token axes act as similarity anchors. These tokens keep
# pure one-axis embeddings; every other token may load onto their axes.
TARGETS = ["bottle", "car", "dog", "chair", "cat", "train", "sofa"]

# token -> {target: weight}. Anything not listed has a pure own-axis vector.
COMPONENTS = {
    # sofa neighborhood
    "pillow": {"sofa": 1.3},
    "desk": {"sofa": 1.2, "chair": 0.3},
    "bookcase": {"sofa": 1.15},
    "studio": {"sofa": 1.0},
    "couch": {"sofa": 1.0},
    "folding": {"sofa": 1.1, "chair": 0.8},
    # chair neighborhood
    "barber": {"chair": 0.8},
    "rocking": {"chair": 0.8},
    "rocker": {"chair": 0.7},
    "throne": {"chair": 0.9},
    "bench": {"chair": 0.5},
    # cat neighborhood
    "tabby": {"cat": 1.35},
    "tiger": {"cat": 1.0},
    "fox": {"cat": 1.1},
    "terrier": {"cat": 1.1},
    "wire": {"cat": 0.4},
    "haired": {"cat": 0.4},
    "toy": {"cat": 0.75},
    "hamster": {"cat": 1.6},
    # dog neighborhood
    "pug": {"dog": 1.2},
    "shepherd": {"dog": 0.9},
    "alsatian": {"dog": 0.9},
    "german": {"dog": 0.2},
    "chihuahua": {"dog": 1.0},
    "pinscher": {"dog": 0.8},
    "affenpinscher": {"dog": 0.6},
    "tibetan": {"dog": 0.5},
    # train neighborhood
    "steam": {"train": 1.2},
    "locomotive": {"train": 1.2},
    "bullet": {"train": 0.9},
    "freight": {"train": 0.8},
    "streetcar": {"train": 0.55},
    "tram": {"train": 0.55},
    "tramcar": {"train": 0.55},
    "trolley": {"train": 0.3},
    "trolleybus": {"train": 0.3},
    "passenger": {"train": 0.5},
    "coach": {"train": 0.6},
    "carriage": {"train": 0.6},
    # bottle neighborhood
    "beer": {"bottle": 0.9},
    "wine": {"bottle": 0.9},
    "pill": {"bottle": 0.85},
    "soda": {"bottle": 0.85},
    "pop": {"bottle": 0.6},
    "water": {"bottle": 0.15},
    "corkscrew": {"bottle": 0.4},
    "screw": {"bottle": 0.4},
    "jar": {"bottle": 0.3},
    "vase": {"bottle": 0.25},
    # car neighborhood
    "sports": {"car": 0.9},
    "sport": {"car": 0.9},
    "racer": {"car": 0.7},
    "race": {"car": 0.8},
    "racing": {"car": 0.8},
    "convertible": {"car": 0.85},
    "jeep": {"car": 0.6},
    "taxi": {"car": 0.7},
    "taxicab": {"car": 0.7},
    "cab": {"car": 0.5},
    "limousine": {"car": 0.75},
    "limo": {"car": 0.75},
    "ambulance": {"car": 0.5},
    "wheel": {"car": 0.45},
    "mirror": {"car": 0.3},
    "minivan": {"car": 0.55},
    "pickup": {"car": 0.4},
    "truck": {"car": 0.5},
}

DIM = 300
NOISE_DIMS = 8
NOISE_SCALE = 0.001


def tokenize(text):
    out, seen, token = [], set(), ""
    for c in text.lower():
        if c.isspace() or c in ",-":
            if token and token not in seen:
                seen.add(token)
                out.append(token)
            token = ""
        else:
            token += c
    if token and token not in seen:
        out.append(token)
    return out


def build_synsets():
    synsets = dict(NODES)
    for key, lemmas, parent in ENTRIES:
        if key in synsets:
            raise SystemExit(f"duplicate synset key {key}")
        synsets[key] = (lemmas, [parent])
    for key, (_, parents) in synsets.items():
        for p in parents:
            if p not in synsets:
                raise SystemExit(f"{key}: unknown parent {p}")
    return synsets


def assign_offsets(synsets):
    return {key: f"n{10000000 + 13 * i:08d}" for i, key in enumerate(sorted(synsets))}


def vocab_rows(ids):
    rows = [(key, ", ".join(lemmas)) for key, lemmas, _ in ENTRIES]
    random.Random(20240605).shuffle(rows)
    return [(i, ids[key], label) for i, (key, label) in enumerate(rows)]


# ---------------------------------------------------------------- embeddings
def build_embeddings(vocab):
    tokens = set(TARGETS)
    for _, _, label in vocab:
        tokens.update(tokenize(label))
    tokens = sorted(tokens)
    if len(tokens) > DIM - NOISE_DIMS:
        raise SystemExit(f"too many tokens ({len(tokens)}) for {DIM} dimensions")
    axis = {t: i for i, t in enumerate(tokens)}
    noise_rng = random.Random(915233)
    rows = {}
    for t in tokens:
        vec = [0.0] * DIM
        vec[axis[t]] = 1.0
        for target, weight in COMPONENTS.get(t, {}).items():
            if t in TARGETS:
                raise SystemExit(f"target token {t} must keep a pure embedding")
            vec[axis[target]] += weight
        for _ in range(NOISE_DIMS):
            d = len(tokens) + noise_rng.randrange(DIM - len(tokens))
            vec[d] += noise_rng.uniform(-NOISE_SCALE, NOISE_SCALE)
        rows[t] = vec
    return rows


def format_embeddings(rows):
    lines = []
    for word in sorted(rows):
        comps = " ".join(f"{v:.6g}" for v in rows[word])
        lines.append(f"{word} {comps}")
    return "\n".join(lines) + "\n"


def parse_embeddings(text):
    rows = {}
    for line in text.strip().split("\n"):
        parts = line.split()
        rows[parts[0]] = [float(v) for v in parts[1:]]
    return rows


# ------------------------------------------------------------- verification
def mean_embedding(tokens, rows):
    vecs = [rows[t] for t in tokens if t in rows]
    if not vecs:
        return None
    return [sum(v[i] for v in vecs) / len(vecs) for i in range(len(vecs[0]))]


def cosine(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    return dot / (na * nb)


def w2v_topk(target, vocab, rows, k=5):
    tvec = mean_embedding(tokenize(target), rows)
    scored = []
    for index, _, label in vocab:
        vec = mean_embedding(tokenize(label), rows)
        if vec is None:
            continue
        scored.append((-cosine(tvec, vec), index, label))
    scored.sort()
    return scored[:k]


def closure(synsets, key):
    out, stack = [], [key]
    seen = set()
    while stack:
        cur = stack.pop()
        if cur in seen or cur not in synsets:
            continue
        seen.add(cur)
        out.append(cur)
        stack.extend(synsets[cur][1])
    return out


def wordnet_candidates(target, vocab, synsets, key_of_id, ids):
    target_tokens = tokenize(target)
    lemma_owner = {}
    for key, (lemmas, _) in synsets.items():
        for lemma in lemmas:
            lemma_owner.setdefault(lemma, []).append(key)
    target_keys = lemma_owner.get(" ".join(target_tokens), [])
    pool = set(target_tokens)
    for tk in target_keys:
        for ck in closure(synsets, tk):
            for lemma in synsets[ck][0]:
                pool.update(tokenize(lemma))
    out = []
    for index, synset_id, label in vocab:
        tokens = tokenize(label)
        match = any(t in pool for t in tokens)
        if not match and target_keys:
            entry_key = key_of_id[synset_id]
            match = any(ck in target_keys for ck in closure(synsets, entry_key))
        if match:
            out.append((index, label))
    return out


def entry_index(vocab, key, ids):
    sid = ids[key]
    for index, synset_id, label in vocab:
        if synset_id == sid:
            return index
    raise SystemExit(f"{key} missing from vocabulary")


def verify(vocab, synsets, ids, rows):
    key_of_id = {sid: key for key, sid in ids.items()}
    label_of = {index: label for index, _, label in vocab}

    def check_wn(target, required, forbidden=()):
        got = wordnet_candidates(target, vocab, synsets, key_of_id, ids)
        got_indices = {index for index, _ in got}
        for key in required:
            if entry_index(vocab, key, ids) not in got_indices:
                raise SystemExit(f"wordnet({target}) lacks {key}: {sorted(l for _, l in got)}")
        for key in forbidden:
            if entry_index(vocab, key, ids) in got_indices:
                raise SystemExit(f"wordnet({target}) must not contain {key}")

    check_wn("bottle", ["beer_bottle", "pill_bottle", "pop_bottle", "water_bottle",
                        "wine_bottle", "corkscrew"])
    check_wn("car", ["racer", "sports_car", "streetcar", "freight_car", "car_wheel",
                     "car_mirror", "cab", "limousine"])
    check_wn("dog", ["pug", "border_terrier", "german_shepherd", "tibetan_terrier",
                     "affenpinscher", "chihuahua"])
    check_wn("chair", ["folding_chair", "barber_chair", "throne"])
    check_wn("cat", ["tabby", "tiger_cat", "siamese_cat", "lesser_panda"],
             forbidden=["tiger", "lion", "hamster"])
    check_wn("train", ["bullet_train"],
             forbidden=["steam_locomotive", "electric_locomotive"])
    check_wn("sofa", ["studio_couch"])

    def check_w2v(target, expected_keys):
        top = w2v_topk(target, vocab, rows)
        got = {index for _, index, _ in top}
        want = {entry_index(vocab, key, ids) for key in expected_keys}
        if got != want:
            listing = ", ".join(f"{label_of[i]}={-c:.3f}" for c, i, _ in top)
            raise SystemExit(f"w2v({target}) top-5 mismatch: {listing}")

    check_w2v("sofa", ["folding_chair", "pillow", "desk", "bookcase", "studio_couch"])
    check_w2v("cat", ["tabby", "tiger_cat", "wirehaired_fox_terrier", "toy_terrier",
                      "hamster"])
    check_w2v("bottle", ["beer_bottle", "wine_bottle", "pill_bottle", "pop_bottle",
                         "corkscrew"])

    train_top = w2v_topk("train", vocab, rows)
    steam = entry_index(vocab, "steam_locomotive", ids)
    if steam not in {index for _, index, _ in train_top}:
        listing = ", ".join(f"{label_of[i]}={-c:.3f}" for c, i, _ in train_top)
        raise SystemExit(f"w2v(train) misses steam locomotive: {listing}")


# -------------------------------------------------------------- file output
def write_file(path, text):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        f.write(text)
    print(f"wrote {os.path.relpath(path, os.path.join(OUT, '..', '..'))}")


def emit_vocab(vocab):
    lines = ["# class_index\tsynset_id\tlabel"]
    lines += [f"{i}\t{sid}\t{label}" for i, sid, label in vocab]
    write_file(os.path.join(OUT, "imagenet_vocab.tsv"), "\n".join(lines) + "\n")


def emit_ontology_tsv(synsets, ids):
    lines = ["# synset_id\tlemmas\thypernym_ids"]
    for key in sorted(synsets):
        lemmas, parents = synsets[key]
        lines.append("\t".join([ids[key], "|".join(lemmas),
                                "|".join(ids[p] for p in parents)]))
    write_file(os.path.join(OUT, "ontology.tsv"), "\n".join(lines) + "\n")


def emit_wordnet(synsets, ids):
    header = (
        "  1 This file is a generated miniature noun database in the WordNet\n"
        "  2 3.0 flat-file layout. It covers only the label fixtures bundled\n"
        "  3 with this repository.\n"
    )
    data_lines = []
    index = {}
    for key in sorted(synsets):
        lemmas, parents = synsets[key]
        offset = ids[key][1:]
        words = " ".join(f"{lemma.replace(' ', '_')} 0" for lemma in lemmas)
        ptrs = " ".join(f"@ {ids[p][1:]} n 0000" for p in parents)
        p_cnt = f"{len(parents):03d}"
        gloss = f"fixture synset {key.replace('_', ' ')}"
        line = f"{offset} 05 n {len(lemmas):02x} {words} {p_cnt}"
        if ptrs:
            line += f" {ptrs}"
        line += f" | {gloss}"
        data_lines.append(line)
        for lemma in lemmas:
            index.setdefault(lemma.replace(" ", "_"), []).append(offset)
    write_file(os.path.join(OUT, "wordnet", "data.noun"), header + "\n".join(data_lines) + "\n")

    index_lines = []
    for lemma in sorted(index):
        offsets = index[lemma]
        index_lines.append(
            f"{lemma} n {len(offsets)} 1 @ {len(offsets)} 0 " + " ".join(offsets))
    write_file(os.path.join(OUT, "wordnet", "index.noun"), header + "\n".join(index_lines) + "\n")


def emit_shape_vocab():
    labels = ["red", "green", "blue", "yellow", "magenta", "cyan"]
    lines = ["# class_index\tsynset_id\tlabel"]
    lines += [f"{i}\tfx{90000001 + i:08d}\t{label}" for i, label in enumerate(labels)]
    write_file(os.path.join(OUT, "shape_vocab.tsv"), "\n".join(lines) + "\n")


def main():
    synsets = build_synsets()
    ids = assign_offsets(synsets)
    vocab = vocab_rows(ids)
    embedding_text = format_embeddings(build_embeddings(vocab))
    rows = parse_embeddings(embedding_text)  # verify what readers will parse

    verify(vocab, synsets, ids, rows)

    emit_vocab(vocab)
    emit_ontology_tsv(synsets, ids)
    emit_wordnet(synsets, ids)
    write_file(os.path.join(OUT, "embeddings_300d.txt"), embedding_text)
    emit_shape_vocab()
    print(f"ok: {len(vocab)} vocabulary entries, {len(synsets)} synsets")


if __name__ == "__main__":
    main()
