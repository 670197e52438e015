import pandas as pd
from sklearn.feature_selection import SelectKBest, chi2
from sklearn.model_selection import train_test_split
from sklearn.tree import DecisionTreeClassifier

frame = pd.read_csv("genes.csv")
target = frame.pop("class")
selector = SelectKBest(chi2, k=20)
reduced = selector.fit_transform(frame, target)
train_X, test_X, train_y, test_y = train_test_split(reduced, target, stratify=target)
tree = DecisionTreeClassifier(max_depth=4)
tree.fit(train_X, train_y)
