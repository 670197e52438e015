import pandas as pd
from sklearn.feature_extraction.text import TfidfVectorizer
from sklearn.model_selection import train_test_split
from sklearn.naive_bayes import MultinomialNB

reviews = pd.read_csv("reviews.csv")
vectorizer = TfidfVectorizer(max_features=5000)
X = vectorizer.fit_transform(reviews["text"])
y = reviews["label"]
X_train, X_test, y_train, y_test = train_test_split(X, y, test_size=0.2)
nb = MultinomialNB()
nb.fit(X_train, y_train)
print(nb.score(X_test, y_test))
